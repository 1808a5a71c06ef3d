#include "cdetect/rng.hpp"

#include <cmath>
#include <numbers>

namespace cdetect {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer: bijective avalanche mix of a 64-bit word.
std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed + kGamma) ^ mix64(stream + 0x6A09E667F3BCC909ull));
}

}  // namespace

RngStream RngStream::sub(std::uint64_t child) const noexcept {
  return RngStream{seed, mix64(stream ^ mix64(child + 0xBB67AE8584CAA73Bull))};
}

Sampler::Sampler(RngStream stream) noexcept
    : state_(stream_key(stream.seed, stream.stream)) {}

std::uint64_t Sampler::next_bits() noexcept {
  state_ += kGamma;
  return mix64(state_);
}

double Sampler::uniform() noexcept {
  return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
}

double Sampler::uniform(double lo, double hi) noexcept {
  return lo + (hi - lo) * uniform();
}

double Sampler::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  const double u1 = static_cast<double>((next_bits() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace cdetect
