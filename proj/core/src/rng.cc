#include "privtrans/rng.h"

#include <cmath>
#include <numbers>

namespace privtrans {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t Mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::NextU64() {
  ++position_;
  return Mix64(Mix64(seed_) + position_ * kGamma);
}

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double Rng::Normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::AddNormal(double* data, std::size_t n, double scale) {
  // Marsaglia polar method: one log and no trig per accepted pair.
  for (std::size_t i = 0; i < n; i += 2) {
    double u, v, s;
    do {
      u = 2.0 * Uniform() - 1.0;
      v = 2.0 * Uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = scale * std::sqrt(-2.0 * std::log(s) / s);
    data[i] += f * u;
    if (i + 1 < n) data[i + 1] += f * v;
  }
}

std::uint64_t Rng::Below(std::uint64_t n) {
  // Lemire's multiply-shift; the bias is below 2^-64 * n and irrelevant here.
  const unsigned __int128 product =
      static_cast<unsigned __int128>(NextU64()) * n;
  return static_cast<std::uint64_t>(product >> 64);
}

Rng Rng::Split(std::uint64_t tag) const {
  return Rng(Mix64(seed_ ^ Mix64(tag + kGamma)) + 0x632BE59BD9B4E019ULL, 0);
}

}  // namespace privtrans
