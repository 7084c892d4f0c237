#include "privtrans/tensor.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "privtrans/errors.h"

namespace privtrans {

std::size_t ShapeSize(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {}

Tensor Tensor::Uninitialized(std::vector<int> shape) {
  Tensor t;
  t.data_.resize(ShapeSize(shape));
  t.shape_ = std::move(shape);
  return t;
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != ShapeSize(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match shape " + ShapeString());
  }
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::ShapeString() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

ImageTensor::ImageTensor(int channels, int height, int width,
                         std::vector<double> values)
    : ImageTensor(Tensor({channels, height, width}, std::move(values))) {}

ImageTensor::ImageTensor(Tensor t) : t_(std::move(t)) {
  if (t_.rank() != 3) {
    throw ShapeError("image tensors are C x H x W, got " + t_.ShapeString());
  }
  for (double v : t_.values()) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
      throw std::domain_error("image value outside [-1, 1]");
    }
  }
}

ImageTensor ImageTensor::Filled(int channels, int height, int width,
                                double value) {
  return ImageTensor(Tensor({channels, height, width}, value));
}

double MeanAbsDiff(const ImageTensor& a, const ImageTensor& b) {
  if (!a.SameShape(b)) {
    throw ShapeError("shape mismatch: " + a.tensor().ShapeString() + " vs " +
                     b.tensor().ShapeString());
  }
  const auto av = a.values();
  const auto bv = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += std::abs(av[i] - bv[i]);
  return sum / static_cast<double>(av.size());
}

}  // namespace privtrans
