#include "dpmqte/stat/rng.hpp"

#include <cmath>

namespace dpmqte::stat {

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed)) {}

RngStream RngStream::substream(std::uint64_t seed,
                               std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix_seed(seed);
  for (std::uint64_t idx : path) h = mix_seed(h ^ mix_seed(idx + 0x632BE59BD9B4E019ULL));
  return RngStream(h);
}

double RngStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::exponential() { return -std::log(uniform()); }

bool RngStream::operator==(const RngStream& other) const {
  return seed_ == other.seed_ && engine_ == other.engine_ &&
         has_spare_ == other.has_spare_ && (!has_spare_ || spare_ == other.spare_);
}

}  // namespace dpmqte::stat
