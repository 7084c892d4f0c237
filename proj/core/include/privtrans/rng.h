#ifndef PRIVTRANS_RNG_H_
#define PRIVTRANS_RNG_H_

#include <cstddef>
#include <cstdint>

namespace privtrans {

// Counter-based generator: the n-th draw is a pure function of (seed, n), so
// a stream can be saved, copied and replayed by value. `Split` derives an
// independent stream keyed by a tag; the parent's position is untouched.
//
// Dropout masks, Gaussian noise and every shuffle in the library draw from
// one of these. Copying an Rng and handing both copies to two forward passes
// feeds them the same noise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0)
      : seed_(seed), position_(position) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t NextU64();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Standard normal via Box-Muller; consumes two draws.
  double Normal();
  // data[i] += scale * N(0, 1) for i < n, by the polar method. Consumes a
  // data-independent but variable number of draws, at least n + n % 2, and
  // is not the same stream as n calls to Normal().
  void AddNormal(double* data, std::size_t n, double scale);
  // Uniform integer in [0, n). `n` must be positive.
  std::uint64_t Below(std::uint64_t n);

  Rng Split(std::uint64_t tag) const;

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

// SplitMix64 finalizer. Exposed for hashing ids and configs into seeds.
std::uint64_t Mix64(std::uint64_t z);

}  // namespace privtrans

#endif  // PRIVTRANS_RNG_H_
