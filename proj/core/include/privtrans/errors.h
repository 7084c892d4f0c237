#ifndef PRIVTRANS_ERRORS_H_
#define PRIVTRANS_ERRORS_H_

#include <stdexcept>
#include <string>

namespace privtrans {

// Invalid sizes, architectures, or config values. Raised before any work
// starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or incomplete data on disk.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN or Inf showed up in a forward pass. `where()` names the layer.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& where, const std::string& what)
      : std::runtime_error(what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// Training diverged. `epoch()` is zero-based.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Backward pass reached an op that has no derivative.
class NonDifferentiableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace privtrans

#endif  // PRIVTRANS_ERRORS_H_
