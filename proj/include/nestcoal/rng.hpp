#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nestcoal {

// Random stream owned by one replicate. Streams are keyed by
// (seed, replicate_id) so that replicate r draws the same numbers no matter
// which thread runs it or in which order replicates are scheduled.
using RandomStream = std::mt19937_64;

inline RandomStream make_stream(std::uint64_t seed, std::uint64_t replicate_id = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate_id),
                    static_cast<std::uint32_t>(replicate_id >> 32), 0x6e657374u};
  return RandomStream(seq);
}

// Exp(rate) draw by inversion; rate must be positive.
inline double draw_exponential(RandomStream& rng, double rate) {
  // 1 - U lies in (0, 1], so the log is finite.
  const double u = 1.0 - std::generate_canonical<double, 53>(rng);
  return -std::log(u) / rate;
}

inline double draw_uniform(RandomStream& rng) { return std::generate_canonical<double, 53>(rng); }

}  // namespace nestcoal
