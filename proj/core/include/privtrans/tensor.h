#ifndef PRIVTRANS_TENSOR_H_
#define PRIVTRANS_TENSOR_H_

#include <cstddef>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace privtrans {

// 64-byte aligned allocator whose value-initialization is
// default-initialization, so resize() of a double buffer leaves it unwritten.
// The fixed alignment keeps vectorized reductions summing in the same order
// regardless of where the heap places a buffer.
template <typename T>
struct AlignedBufferAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedBufferAllocator() = default;
  template <typename U>
  AlignedBufferAllocator(const AlignedBufferAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t{kAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{kAlignment});
  }
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  template <typename U>
  friend bool operator==(const AlignedBufferAllocator&,
                         const AlignedBufferAllocator<U>&) noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedBufferAllocator<double>>;

// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, double fill);
  Tensor(std::vector<int> shape, std::vector<double> values);
  // Contents unspecified; for outputs that are about to be overwritten.
  static Tensor Uninitialized(std::vector<int> shape);

  static Tensor Scalar(double v) { return Tensor({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool AllFinite() const;
  std::string ShapeString() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  Buffer data_;
};

std::size_t ShapeSize(const std::vector<int>& shape);

// A C x H x W image with every value finite and in [-1, 1]. The invariant is
// checked once at construction; every accessor is read-only.
class ImageTensor {
 public:
  ImageTensor() = default;
  // Throws ShapeError on a size mismatch and std::domain_error on values
  // outside [-1, 1] or non-finite values.
  ImageTensor(int channels, int height, int width, std::vector<double> values);
  explicit ImageTensor(Tensor t);

  // Constant-valued image, e.g. Filled(3, 32, 32, -1.0) is all black.
  static ImageTensor Filled(int channels, int height, int width, double value);

  int channels() const { return t_.dim(0); }
  int height() const { return t_.dim(1); }
  int width() const { return t_.dim(2); }
  std::size_t size() const { return t_.size(); }
  double at(int c, int y, int x) const {
    return t_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }
  std::span<const double> values() const { return t_.values(); }
  const Tensor& tensor() const { return t_; }

  bool SameShape(const ImageTensor& other) const {
    return t_.shape() == other.t_.shape();
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor t_;
};

// Mean absolute difference between two equally shaped images.
double MeanAbsDiff(const ImageTensor& a, const ImageTensor& b);

}  // namespace privtrans

#endif  // PRIVTRANS_TENSOR_H_
