#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dpmqte::stat {

/// Single-owner random stream. Identical seed and identical call sequence give
/// bit-identical variates. Not thread-safe; parallel callers derive their own
/// stream with `substream`.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Deterministic child stream for (seed, path...). Used to give every chain
  /// or job its own stream independent of scheduling order.
  static RngStream substream(std::uint64_t seed,
                             std::initializer_list<std::uint64_t> path);

  std::uint64_t seed() const noexcept { return seed_; }
  static constexpr std::string_view algorithm() noexcept { return "mt19937_64"; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  double exponential();

  bool operator==(const RngStream& other) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t x) noexcept;

}  // namespace dpmqte::stat
