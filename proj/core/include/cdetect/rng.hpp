#ifndef CDETECT_RNG_HPP
#define CDETECT_RNG_HPP

#include <cstdint>

namespace cdetect {

// Immutable descriptor of a random stream.  A (seed, stream) pair fully
// determines the draw sequence, and derived substreams are statistically
// independent of each other, so per-trial / per-location work can be
// scheduled in any order without changing the numbers produced.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // Derives an independent child stream keyed by `child`.
  RngStream sub(std::uint64_t child) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

// Counter-based generator over an RngStream descriptor.  Instances are cheap
// and local; nothing is shared across threads.
class Sampler {
 public:
  explicit Sampler(RngStream stream) noexcept;

  std::uint64_t next_bits() noexcept;
  // Uniform on [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  // Standard normal via Box-Muller; bit-stable across platforms.
  double normal() noexcept;

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cdetect

#endif  // CDETECT_RNG_HPP
