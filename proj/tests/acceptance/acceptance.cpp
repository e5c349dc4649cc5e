// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is the number of failed criteria (capped).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "dpmqte/bart/bart.hpp"
#include "dpmqte/bart/serialize.hpp"
#include "dpmqte/datagen/datagen.hpp"
#include "dpmqte/density/density.hpp"
#include "dpmqte/density/export.hpp"
#include "dpmqte/dpm/dpm.hpp"
#include "dpmqte/dpm/serialize.hpp"
#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/qte/export.hpp"
#include "dpmqte/qte/qte.hpp"
#include "support/oracles.hpp"

using namespace dpmqte;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const double kQteTruth[5] = {-0.22, -0.18, -0.13, 0.04, 0.05};
const std::vector<double> kProbs{0.1, 0.25, 0.5, 0.75, 0.9};

// Shared fits for criteria 3, 4 and 10 (three bivariate normals) and 5, 6 (Dunson).
struct JointFits {
  Matrix data;
  density::GridSpec grid;
  Vector blocked, polya;
  double blocked_seconds = 0.0;
};

const JointFits& joint_fits() {
  static const JointFits f = [] {
    JointFits j;
    stat::RngStream rng(2024);
    j.data = datagen::three_normals(500, rng).x;
    j.grid = density::data_driven_grid(j.data, 30);
    for (auto s : {dpm::Sampler::blocked, dpm::Sampler::polya}) {
      const auto h = dpm::default_hypers(j.data, true, true, 50);
      auto chain = stat::RngStream::substream(2024, {static_cast<std::uint64_t>(s)});
      const auto t0 = Clock::now();
      const auto post = dpm::run_mcmc(j.data, h, {5000, 5000, 3}, s, chain);
      const auto est = density::estimate_joint_density(post, j.grid, 5, 1);
      (s == dpm::Sampler::blocked ? j.blocked : j.polya) = est.density.average;
      if (s == dpm::Sampler::blocked) j.blocked_seconds = since(t0);
    }
    return j;
  }();
  return f;
}

Outcome c1() {
  const auto rep = oracles::conjugacy_suite(20, 11);
  return {rep.cases == 20 && rep.max_abs_error < 1e-6, fmt("%d cases, max abs error %.2e", rep.cases, rep.max_abs_error)};
}

Outcome c2() {
  const auto b = oracles::getting_it_right(dpm::Sampler::blocked, 5000, 10, 77);
  const auto p = oracles::getting_it_right(dpm::Sampler::polya, 5000, 10, 77);
  const bool ok = b.alpha_p > 0.01 && b.lambda_p > 0.01 && p.alpha_p > 0.01 && p.lambda_p > 0.01;
  return {ok, fmt("KS p-values blocked (alpha %.3f, lambda %.3f), polya (alpha %.3f, lambda %.3f)", b.alpha_p,
                  b.lambda_p, p.alpha_p, p.lambda_p)};
}

Outcome c3() {
  const auto& f = joint_fits();
  double mae = 0.0;
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    double z[2];
    f.grid.point(i, z);
    mae += std::abs(f.blocked[static_cast<Eigen::Index>(i)] - datagen::three_normals_density(z[0], z[1]));
  }
  mae /= static_cast<double>(f.grid.size());
  const double integral = density::trapezoid(f.grid, f.blocked);
  return {mae < 0.01 && std::abs(integral - 1.0) <= 0.02,
          fmt("MAE %.4f on 30x30 grid, integral %.4f, blocked fit+evaluation %.1f s", mae, integral, f.blocked_seconds)};
}

Outcome c4() {
  const auto& f = joint_fits();
  const double d = (f.blocked - f.polya).cwiseAbs().maxCoeff();
  return {d <= 0.05, fmt("max abs difference %.4f", d)};
}

struct ConditionalFits {
  int blocked_cover = 0, polya_cover = 0;
  bool monotone = true;
  double blocked_seconds = 0.0, polya_seconds = 0.0;
  double cache_seconds = 0.0, reference_seconds = 0.0;
  bool identical = true;
};

const ConditionalFits& conditional_fits() {
  static const ConditionalFits f = [] {
    ConditionalFits c;
    stat::RngStream rng(35);
    const auto data = datagen::dunson_example(500, rng);
    Matrix z(500, 2);
    z.col(0) = data.y;
    z.col(1) = data.x.col(0);
    density::CurveRequest req;
    req.xpred.resize(51, 1);
    for (int i = 0; i < 51; ++i) req.xpred(i, 0) = 0.02 * i;
    const Vector y = data.y;
    req.ygrid = density::data_driven_axis({y.data(), 500}, 100);
    for (auto s : {dpm::Sampler::blocked, dpm::Sampler::polya}) {
      const auto h = dpm::default_hypers(z, true, true, 50);
      auto chain = stat::RngStream::substream(35, {static_cast<std::uint64_t>(s)});
      const auto post = dpm::run_mcmc(z, h, {5000, 5000, 3}, s, chain);
      const auto t0 = Clock::now();
      const auto res = density::estimate_conditional(post, req, 7, 1);
      const double secs = since(t0);
      const auto& mean = res.curves[2];
      const auto [lo, hi] = density::credible_band(mean.draws, 0.95, density::BandKind::hpd);
      int cover = 0;
      for (int i = 0; i < 51; ++i) {
        const double m = datagen::dunson_mean(req.xpred(i, 0));
        cover += lo[i] <= m && m <= hi[i];
      }
      const Matrix& cdf = res.curves[1].draws;
      for (Eigen::Index r = 0; r < cdf.rows(); ++r)
        for (Eigen::Index k = 0; k < cdf.cols(); ++k) {
          const bool edge = k % 100 == 0;
          if (cdf(r, k) < 0.0 || cdf(r, k) > 1.0 || (!edge && cdf(r, k) < cdf(r, k - 1))) c.monotone = false;
        }
      if (s == dpm::Sampler::blocked) {
        c.blocked_cover = cover;
        c.blocked_seconds = secs;
      } else {
        c.polya_cover = cover;
        c.polya_seconds = secs;
        dpm::DpmPosterior sub = post;
        sub.draws.resize(50);
        density::PolyaCurveOptions ref;
        ref.cache = false;
        const auto t1 = Clock::now();
        const auto a = density::estimate_conditional(sub, req, 7, 1);
        c.cache_seconds = since(t1);
        const auto t2 = Clock::now();
        const auto b = density::estimate_conditional(sub, req, 7, 1, ref);
        c.reference_seconds = since(t2);
        for (std::size_t k = 0; k < a.curves.size(); ++k)
          c.identical = c.identical && a.curves[k].draws == b.curves[k].draws;
      }
    }
    return c;
  }();
  return f;
}

Outcome c5() {
  const auto& f = conditional_fits();
  const bool ok = f.blocked_cover >= 41 && f.polya_cover >= 41 && f.monotone;
  return {ok, fmt("mean-curve HPD coverage blocked %d/51, polya %d/51; CDF draws monotone and in [0,1]: %s",
                  f.blocked_cover, f.polya_cover, f.monotone ? "yes" : "no")};
}

Outcome c6() {
  const auto& f = conditional_fits();
  const double r1 = f.polya_seconds / f.blocked_seconds;
  const double r2 = f.reference_seconds / f.cache_seconds;
  return {r1 >= 3.0 && r2 >= 1.5 && f.identical,
          fmt("polya/blocked conditional time %.2f (%.1f s / %.1f s); reference/cached %.2f on 50 draws, outputs "
              "identical: %s",
              r1, f.polya_seconds, f.blocked_seconds, r2, f.identical ? "yes" : "no")};
}

qte::QteResult run_qte(const datagen::SyntheticDataset& d, const qte::QteConfig& c, std::uint64_t seed) {
  std::vector<bart::VarType> types(static_cast<std::size_t>(d.x.cols()), bart::VarType::continuous);
  return qte::estimate_qte({d.y.data(), static_cast<std::size_t>(d.y.size())}, d.x, types, d.treatment, c, seed);
}

qte::QteConfig light_qte() {
  qte::QteConfig c;
  c.bart_mcmc = {200, 5, 50};
  c.dpm_mcmc = {200, 40, 2};
  return c;
}

Outcome c7() {
  stat::RngStream rng(1);
  const auto d = datagen::qte_example(2000, rng);
  qte::QteConfig c;  // K = 5, L = 200, blocked N = 50
  c.threads = 4;
  const auto t0 = Clock::now();
  const auto r = run_qte(d, c, 1);
  const double secs = since(t0);
  bool ok = secs <= 1800.0;
  std::ostringstream s;
  for (int j = 0; j < 5; ++j) {
    const double lo = r.qte_ci[0](j, 0), hi = r.qte_ci[0](j, 1), est = r.qte_avg[j], truth = kQteTruth[j];
    const bool inside = lo <= truth && truth <= hi;
    const bool close = std::abs(est - truth) <= 0.15;
    ok = ok && inside && close;
    s << fmt("p=%.2f %+.3f (%+.3f, %+.3f) truth %+.2f%s%s; ", kProbs[j], est, lo, hi, truth, inside ? "" : " OUTSIDE",
             close ? "" : " FAR");
  }
  s << fmt("%.0f s. ", secs);

  // Ten-replicate smoke variant with lighter chains.
  const auto t1 = Clock::now();
  double bias = 0.0;
  for (std::uint64_t rep = 1; rep <= 10; ++rep) {
    stat::RngStream g(1000 + rep);
    const auto dr = datagen::qte_example(2000, g);
    auto lc = light_qte();
    lc.threads = 4;
    bias += run_qte(dr, lc, 1000 + rep).qte_avg[2] - kQteTruth[2];
  }
  bias /= 10.0;
  ok = ok && std::abs(bias) <= 0.1;
  s << fmt("smoke: mean median bias %+.3f over 10 replicates (%.0f s)", bias, since(t1));
  return {ok, s.str()};
}

Outcome c8() {
  stat::RngStream rng(8);
  const auto d = datagen::null_effect_example(2000, rng);
  auto c = light_qte();
  c.threads = 4;
  const auto r = run_qte(d, c, 8);
  const double worst = r.qte_avg.cwiseAbs().maxCoeff();
  std::ostringstream s;
  s << "avg QTE";
  for (int j = 0; j < 5; ++j) s << fmt(" %+.3f", r.qte_avg[j]);
  s << fmt("; max |avg| %.3f; observed arm quantile differences in this sample:", worst);
  std::vector<double> arm[2];
  for (Eigen::Index i = 0; i < d.y.size(); ++i) arm[d.treatment[static_cast<std::size_t>(i)]].push_back(d.y[i]);
  for (auto& a : arm) std::sort(a.begin(), a.end());
  for (double p : kProbs) {
    auto q = [p](const std::vector<double>& v) { return v[static_cast<std::size_t>(p * static_cast<double>(v.size()))]; };
    s << fmt(" %+.3f", q(arm[1]) - q(arm[0]));
  }
  return {worst < 0.1, s.str()};
}

Outcome c9() {
  const auto poly = bart::BartHyper::defaults(bart::SplitPrior::polynomial);
  const auto expo = bart::BartHyper::defaults(bart::SplitPrior::exponential);
  const bool split_ok = std::abs(bart::split_probability(0, poly) - 0.95) < 1e-15 &&
                        std::abs(bart::split_probability(1, poly) - 0.2375) < 1e-15 &&
                        std::abs(bart::split_probability(3, expo) - 0.125) < 1e-15;
  std::vector<bart::VarType> types(10, bart::VarType::continuous);
  for (int j = 0; j < 5; ++j) types[static_cast<std::size_t>(j)] = bart::VarType::categorical;
  const std::set<int> relevant{0, 1, 5, 6, 7};
  double worst_rmse = 0.0;
  int separated = 0;
  std::ostringstream s;
  for (auto kind : {bart::SplitPrior::polynomial, bart::SplitPrior::exponential}) {
    int sep = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      stat::RngStream rng(seed);
      const auto d = datagen::mix_data(500, 10, 1.0, rng);
      auto h = bart::BartHyper::defaults(kind);
      h.ntree = 50;
      const auto post = bart::fit_continuous_bart(d.x, types, {d.y.data(), 500}, h, {100, 500, 1}, rng);
      const Vector f = post.train_fits.colwise().mean().transpose();
      worst_rmse = std::max(worst_rmse, std::sqrt((f - d.y).squaredNorm() / 500.0));
      const auto vi = bart::variable_importance(post);
      double rel_min = 1e300, irr_max = -1e300;
      for (int j = 0; j < 10; ++j) {
        const double m = vi ? vi->mi[j] : 0.0;
        if (relevant.count(j)) rel_min = std::min(rel_min, m);
        else irr_max = std::max(irr_max, m);
      }
      sep += rel_min > irr_max;
    }
    s << fmt("%s MI separation %d/5; ", kind == bart::SplitPrior::polynomial ? "polynomial" : "exponential", sep);
    separated = kind == bart::SplitPrior::polynomial ? sep : std::min(separated, sep);
  }
  const bool ok = split_ok && worst_rmse < 1.5 && separated >= 4;
  return {ok, fmt("split probabilities %s; worst training RMSE %.3f; ", split_ok ? "ok" : "WRONG", worst_rmse) + s.str()};
}

Outcome c10() {
  stat::RngStream rng(2024);
  const auto data = datagen::three_normals(500, rng).x;
  auto acf1 = [](const std::vector<double>& v) { return diagnostics::autocorrelation(v, 1)[1]; };
  struct Chain {
    double alpha, lambda;
  };
  auto run = [&](dpm::Sampler s, int n) {
    const auto h = dpm::default_hypers(data, true, true, n);
    auto chain = stat::RngStream::substream(10, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(n)});
    const auto post = dpm::run_mcmc(data, h, {10000, 10000, 1}, s, chain, true);
    return Chain{acf1(post.diagnostics->alpha), acf1(post.diagnostics->lambda)};
  };
  const auto polya = run(dpm::Sampler::polya, 50);
  const auto b100 = run(dpm::Sampler::blocked, 100);
  const auto b20 = run(dpm::Sampler::blocked, 20);
  const bool ok = polya.lambda < b100.lambda && b20.alpha >= b100.alpha && std::abs(b100.alpha - polya.alpha) <= 0.1;
  return {ok, fmt("lag-1 acf lambda: polya %.3f, blocked N=100 %.3f; alpha: N=20 %.3f, N=100 %.3f, polya %.3f",
                  polya.lambda, b100.lambda, b20.alpha, b100.alpha, polya.alpha)};
}

std::string pipelines_fingerprint(int threads) {
  std::ostringstream out;
  stat::RngStream rng(3);
  const auto mix = datagen::mix_data(200, 10, 1.0, rng);
  std::vector<bart::VarType> types(10, bart::VarType::continuous);
  auto h = bart::BartHyper::defaults(bart::SplitPrior::exponential);
  h.ntree = 20;
  stat::RngStream br(4);
  out << bart::to_json(bart::fit_continuous_bart(mix.x, types, {mix.y.data(), 200}, h, {50, 30, 1}, br)).dump();

  const auto tn = datagen::three_normals(200, rng).x;
  const auto grid = density::data_driven_grid(tn, 15);
  for (auto s : {dpm::Sampler::blocked, dpm::Sampler::polya}) {
    stat::RngStream dr(5);
    const auto post = dpm::run_mcmc(tn, dpm::default_hypers(tn, true, true, 20), {50, 30, 1}, s, dr, true);
    dpm::write_diagnostics_csv(post, out);
    out << density::to_json(density::estimate_joint_density(post, grid, 6, threads)).dump();
  }

  const auto dun = datagen::dunson_example(200, rng);
  Matrix z(200, 2);
  z.col(0) = dun.y;
  z.col(1) = dun.x.col(0);
  density::CurveRequest req;
  req.xpred = Vector::LinSpaced(5, 0.1, 0.9);
  req.ygrid = density::data_driven_axis({dun.y.data(), 200}, 30);
  for (auto s : {dpm::Sampler::blocked, dpm::Sampler::polya}) {
    stat::RngStream dr(7);
    const auto post = dpm::run_mcmc(z, dpm::default_hypers(z, true, true, 20), {50, 30, 1}, s, dr);
    out << density::to_json(density::estimate_conditional(post, req, 8, threads)).dump();
  }

  const auto q = datagen::qte_example(300, rng);
  qte::QteConfig c;
  c.bart_hyper.ntree = 20;
  c.bart_mcmc = {50, 3, 5};
  c.dpm_mcmc = {50, 20, 1};
  c.nclusters = 15;
  c.threads = threads;
  const auto r = run_qte(q, c, 9);
  out << qte::to_json(r).dump();
  qte::write_draws_csv(r, out);
  return out.str();
}

Outcome c11() {
  const auto a = pipelines_fingerprint(1);
  const auto b = pipelines_fingerprint(1);
  const auto c = pipelines_fingerprint(4);
  const bool ok = a == b && a == c;
  return {ok, fmt("%zu bytes of serialized output; repeat run %s, 4 workers %s", a.size(),
                  a == b ? "identical" : "DIFFERENT", a == c ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"conjugacy oracle", c1},
      {"getting it right", c2},
      {"joint density accuracy", c3},
      {"sampler cross-agreement", c4},
      {"conditional estimation", c5},
      {"performance ordering", c6},
      {"qte replication", c7},
      {"null effect", c8},
      {"bart checks", c9},
      {"diagnostics ordering", c10},
      {"determinism", c11},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2d %-24s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                since(t0));
    std::fflush(stdout);
  }
  return std::min(failed, 100);
}
