#include "dpmqte/qte/qte.hpp"

#include <chrono>
#include <cmath>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/random.hpp"
#include "dpmqte/util/parallel.hpp"

namespace dpmqte::qte {

using stat::RngStream;

Rdist parse_rdist(const std::string& name) {
  if (name == "known") return Rdist::known;
  if (name == "empirical") return Rdist::empirical;
  if (name == "bootstrap") return Rdist::bootstrap;
  throw InvalidArgument("unknown Rdist '" + name + "' (expected known, empirical or bootstrap)");
}

std::string to_string(Rdist r) {
  switch (r) {
    case Rdist::known: return "known";
    case Rdist::empirical: return "empirical";
    case Rdist::bootstrap: return "bootstrap";
  }
  return "?";
}

std::vector<std::string> check(const QteConfig& c, std::size_t num_vars) {
  std::vector<std::string> issues;
  auto guard = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      issues.emplace_back(e.what());
    }
  };
  if (c.probs.empty()) issues.emplace_back("probs is empty");
  for (double p : c.probs)
    if (!(p > 0.0 && p < 1.0)) issues.push_back("prob " + std::to_string(p) + " is outside (0, 1)");
  if (c.rdist == Rdist::known) {
    if (!c.xpred)
      issues.emplace_back("Rdist=known requires xpred");
    else if (static_cast<std::size_t>(c.xpred->cols()) != num_vars)
      issues.push_back("xpred has " + std::to_string(c.xpred->cols()) + " columns, x has " +
                       std::to_string(num_vars));
    else if (c.xpred->rows() == 0)
      issues.emplace_back("xpred has no rows");
  }
  guard([&] { validate(c.bart_mcmc); });
  guard([&] { validate(c.dpm_mcmc); });
  if (c.sampler == dpm::Sampler::blocked && c.nclusters < 2)
    issues.emplace_back("blocked sampler needs nclusters >= 2");
  if (c.sampler == dpm::Sampler::polya && !(c.epsilon > 0.0 && c.epsilon < 1.0))
    issues.emplace_back("epsilon must be in (0, 1)");
  if (c.grid) {
    guard([&] { density::validate(density::GridSpec{{*c.grid}, false}); });
  } else if (c.ngrid < 2) {
    issues.emplace_back("ngrid must be >= 2");
  }
  for (double a : c.alphas)
    if (!(a > 0.0 && a < 1.0)) issues.push_back("alpha " + std::to_string(a) + " is outside (0, 1)");
  if (c.threads < 1) issues.emplace_back("threads must be >= 1");
  return issues;
}

void validate(const QteConfig& c, std::size_t num_vars) {
  const auto issues = check(c, num_vars);
  if (issues.empty()) return;
  std::string msg = "invalid qte configuration:";
  for (const auto& s : issues) msg += "\n  - " + s;
  throw InvalidArgument(msg);
}

Vector bayesian_bootstrap_weights(std::size_t n, RngStream& rng) { return stat::sample_uniform_dirichlet(n, rng); }

Vector marginal_cdf(const Matrix& conditional, const Vector& weights) {
  if (conditional.rows() != weights.size())
    throw DimensionMismatch("marginal_cdf: " + std::to_string(conditional.rows()) + " rows, " +
                            std::to_string(weights.size()) + " weights");
  Vector f = Vector::Zero(conditional.cols());
  for (Eigen::Index i = 0; i < conditional.rows(); ++i) f.noalias() += weights[i] * conditional.row(i).transpose();
  return f.cwiseMax(0.0).cwiseMin(1.0);
}

double quantile_from_cdf(std::span<const double> cdf, std::span<const double> grid, double p) {
  if (cdf.size() != grid.size() || grid.empty())
    throw DimensionMismatch("quantile_from_cdf: cdf and grid lengths differ");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("quantile_from_cdf: p must be in (0, 1)");
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), p);
  if (it == cdf.end())
    throw NumericalError("grid does not cover the " + std::to_string(p) +
                         " quantile (F at the grid maximum is " + std::to_string(cdf.back()) +
                         "); widen the grid");
  return grid[static_cast<std::size_t>(it - cdf.begin())];
}

namespace {

Matrix read_quantiles(const Matrix& cdf_draws, const std::vector<double>& grid,
                      const std::vector<double>& probs) {
  Matrix q(cdf_draws.rows(), static_cast<Eigen::Index>(probs.size()));
  std::vector<double> row(grid.size());
  for (Eigen::Index r = 0; r < cdf_draws.rows(); ++r) {
    for (std::size_t s = 0; s < grid.size(); ++s) row[s] = cdf_draws(r, static_cast<Eigen::Index>(s));
    for (std::size_t j = 0; j < probs.size(); ++j) {
      try {
        q(r, static_cast<Eigen::Index>(j)) = quantile_from_cdf(row, grid, probs[j]);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " [cdf draw " + std::to_string(r) + "]");
      }
    }
  }
  return q;
}

void summarize_effects(QteResult& r) {
  r.control.quantile_draws = read_quantiles(r.control.cdf.draws, r.grid, r.probs);
  r.treated.quantile_draws = read_quantiles(r.treated.cdf.draws, r.grid, r.probs);
  r.control.quantile_avg = density::pairwise_column_mean(r.control.quantile_draws);
  r.treated.quantile_avg = density::pairwise_column_mean(r.treated.quantile_draws);
  r.qte_draws = r.treated.quantile_draws - r.control.quantile_draws;
  r.qte_avg = density::pairwise_column_mean(r.qte_draws);
  r.qte_ci.clear();
  for (double a : r.alphas) {
    Matrix ci(static_cast<Eigen::Index>(r.probs.size()), 2);
    if (r.qte_draws.rows() >= 20) {
      const auto [lo, hi] = density::credible_band(r.qte_draws, 1.0 - a, r.band);
      ci.col(0) = lo;
      ci.col(1) = hi;
    } else {
      ci.setConstant(std::nan(""));
    }
    r.qte_ci.push_back(ci);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

QteResult estimate_qte(std::span<const double> y, const Matrix& x,
                       std::span<const bart::VarType> types, std::span<const int> treatment,
                       const QteConfig& config, std::uint64_t seed) {
  const auto n = y.size();
  if (static_cast<std::size_t>(x.rows()) != n || treatment.size() != n)
    throw DimensionMismatch("qte: y, x and treatment lengths differ");
  validate(config, static_cast<std::size_t>(x.cols()));
  bart::validate(config.bart_hyper, n);
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw InvalidArgument("qte: y must be finite");
    if (treatment[i] != 0 && treatment[i] != 1) throw InvalidArgument("qte: treatment must be 0/1");
    n1 += treatment[i];
  }
  if (n1 == 0 || n1 == n) throw InvalidArgument("qte: both treatment arms must be nonempty");
  if (n1 < 3 || n - n1 < 3) throw InvalidArgument("qte: each arm needs at least 3 observations");

  QteResult r;
  r.probs = config.probs;
  r.alphas = config.alphas;
  r.band = config.band;
  r.grid = config.grid ? *config.grid : density::data_driven_axis(y, config.ngrid);

  // (1) propensity score on the latent scale.
  auto t0 = std::chrono::steady_clock::now();
  RngStream bart_rng = RngStream::substream(seed, {0});
  const auto ps = bart::fit_probit_bart(x, types, treatment, config.bart_hyper, config.bart_mcmc, bart_rng);
  r.ps_latent = config.rdist == Rdist::known ? bart::predict(ps, *config.xpred, config.threads).latent
                                             : ps.train_fits;
  r.seconds_bart = seconds_since(t0);

  const auto K = static_cast<std::size_t>(r.ps_latent.rows());
  const auto ntarget = static_cast<std::size_t>(r.ps_latent.cols());
  const auto L = static_cast<std::size_t>(config.dpm_mcmc.ndpost);
  const auto S = static_cast<Eigen::Index>(r.grid.size());

  std::vector<Vector> weights(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (config.rdist == Rdist::bootstrap) {
      RngStream w = RngStream::substream(seed, {2, k});
      weights[k] = bayesian_bootstrap_weights(ntarget, w);
    } else {
      weights[k] = Vector::Constant(static_cast<Eigen::Index>(ntarget), 1.0 / static_cast<double>(ntarget));
    }
  }

  // (2)-(4) one DPM per (k, arm), marginal CDFs and PDFs per kept draw.
  t0 = std::chrono::steady_clock::now();
  r.seconds_jobs.assign(2 * K, 0.0);
  Matrix cdf[2], pdf[2];
  for (int t = 0; t < 2; ++t) {
    cdf[t].resize(static_cast<Eigen::Index>(K * L), S);
    if (config.pdf) pdf[t].resize(static_cast<Eigen::Index>(K * L), S);
  }
  util::parallel_for(2 * K, config.threads, [&](std::size_t job) {
    const std::size_t k = job / 2;
    const int t = static_cast<int>(job % 2);
    const auto job_start = std::chrono::steady_clock::now();
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (treatment[i] == t) rows.push_back(static_cast<Eigen::Index>(i));
    Matrix z(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      z(static_cast<Eigen::Index>(i), 0) = y[static_cast<std::size_t>(rows[i])];
      z(static_cast<Eigen::Index>(i), 1) = ps.train_fits(static_cast<Eigen::Index>(k), rows[i]);
    }
    RngStream rng = RngStream::substream(seed, {1, k, static_cast<std::uint64_t>(t)});
    dpm::DpmPosterior post;
    try {
      const auto hyper = dpm::default_hypers(z, config.update_alpha, config.hyperpriors, config.nclusters);
      post = dpm::run_mcmc(z, hyper, config.dpm_mcmc, config.sampler, rng);
    } catch (const Error& e) {
      throw NumericalError("dpm fit for propensity draw " + std::to_string(k) + ", arm " +
                           std::to_string(t) + ": " + e.what());
    }
    density::CurveRequest req;
    req.xpred = r.ps_latent.row(static_cast<Eigen::Index>(k)).transpose();
    req.ygrid = r.grid;
    req.pdf = config.pdf;
    req.cdf = true;
    req.mean = false;
    density::PolyaCurveOptions opt;
    opt.epsilon = config.epsilon;
    for (std::size_t l = 0; l < L; ++l) {
      density::DrawCurves c;
      if (config.sampler == dpm::Sampler::blocked) {
        c = density::conditional_curves_blocked(post.draws[l], req);
      } else {
        RngStream cr = RngStream::substream(seed, {3, k, static_cast<std::uint64_t>(t), l});
        c = density::conditional_curves_polya(post.draws[l], req, post.hyper.nu, opt, cr);
      }
      const auto row = static_cast<Eigen::Index>(k * L + l);
      cdf[t].row(row) = marginal_cdf(c.cdf, weights[k]).transpose();
      if (config.pdf) pdf[t].row(row) = (weights[k].transpose() * c.pdf);
    }
    r.seconds_jobs[job] = seconds_since(job_start);
  });
  r.seconds_dpm = seconds_since(t0);

  const double level = 1.0 - config.alphas.front();
  r.control.cdf = density::summarize("cdf", std::move(cdf[0]), level, config.band);
  r.treated.cdf = density::summarize("cdf", std::move(cdf[1]), level, config.band);
  if (config.pdf) {
    r.control.pdf = density::summarize("pdf", std::move(pdf[0]), level, config.band);
    r.treated.pdf = density::summarize("pdf", std::move(pdf[1]), level, config.band);
  }
  summarize_effects(r);
  return r;
}

QteResult predict_quantiles(const QteResult& result, const std::vector<double>& probs) {
  if (probs.empty()) throw InvalidArgument("predict_quantiles: probs is empty");
  for (double p : probs)
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("predict_quantiles: probs must be in (0, 1)");
  if (result.control.cdf.draws.rows() == 0) throw InvalidArgument("predict_quantiles: result holds no cdf draws");
  QteResult r = result;
  r.probs = probs;
  summarize_effects(r);
  return r;
}

}  // namespace dpmqte::qte
