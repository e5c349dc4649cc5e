#pragma once

namespace dpmqte {

/// Burn-in, kept draws and thinning shared by every sampler: run `nskip`
/// steps, then keep every `keepevery`-th of the next ndpost·keepevery steps.
struct McmcSettings {
  int nskip = 100;
  int ndpost = 500;
  int keepevery = 1;
};

/// Throws InvalidArgument on negative burn-in or non-positive counts.
void validate(const McmcSettings& mcmc);

inline bool is_kept_step(const McmcSettings& m, long step) {
  return step >= m.nskip && (step - m.nskip + 1) % m.keepevery == 0;
}

inline long total_steps(const McmcSettings& m) {
  return static_cast<long>(m.nskip) + static_cast<long>(m.ndpost) * m.keepevery;
}

}  // namespace dpmqte
