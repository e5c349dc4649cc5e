#include "dpmqte/bart/bart.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/random.hpp"
#include "dpmqte/stat/special.hpp"
#include "dpmqte/util/parallel.hpp"

namespace dpmqte::bart {

using stat::RngStream;

BartHyper BartHyper::defaults(SplitPrior kind) {
  BartHyper h;
  h.split_prior = kind;
  h.base = kind == SplitPrior::polynomial ? 0.95 : 0.5;
  return h;
}

void validate(const BartHyper& h, std::size_t n) {
  if (h.ntree < 1) throw InvalidArgument("bart: ntree must be >= 1");
  if (h.split_prior == SplitPrior::polynomial) {
    if (!(h.base > 0.0 && h.base < 1.0)) throw InvalidArgument("bart: base must lie in (0, 1)");
    if (!(h.power > 0.0)) throw InvalidArgument("bart: power must be positive");
  } else {
    const double lo = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    if (!(h.base >= lo && h.base <= 0.5))
      throw InvalidArgument("bart: exponential split prior needs base in [1/n, 1/2]");
  }
  if (!(h.k > 0.0)) throw InvalidArgument("bart: k must be positive");
  if (!(h.sigma_df > 0.0)) throw InvalidArgument("bart: sigma_df must be positive");
  if (!(h.sigma_quantile > 0.0 && h.sigma_quantile < 1.0))
    throw InvalidArgument("bart: sigma_quantile must lie in (0, 1)");
}

double split_probability(int depth, const BartHyper& h) {
  if (h.split_prior == SplitPrior::polynomial)
    return h.base / std::pow(1.0 + depth, h.power);
  return std::pow(h.base, depth);
}

double leaf_log_marginal(const LeafStats& s, double sigma2, double tau2) {
  const double n = static_cast<double>(s.n);
  return -0.5 * std::log1p(n * tau2 / sigma2) +
         0.5 * tau2 * s.sum * s.sum / (sigma2 * (sigma2 + n * tau2));
}

TreeShape tree_shape(const DecisionTree& tree, const CovariateSchema& schema) {
  TreeShape s;
  s.stump = tree.is_stump();
  s.nog = tree.nog_nodes().size();
  for (int leaf : tree.leaves())
    if (!splittable_vars(tree, leaf, schema).empty()) ++s.growable;
  return s;
}

double birth_probability(const TreeShape& s) {
  if (s.growable == 0) return 0.0;
  return s.stump ? 1.0 : 0.5;
}

double node_split_probability(const DecisionTree& tree, int node, const CovariateSchema& schema,
                              const BartHyper& hyper) {
  for (std::size_t j = 0; j < schema.num_vars(); ++j)
    if (count_split_choices(tree, node, j, schema) > 0)
      return split_probability(tree.node(node).depth, hyper);
  return 0.0;
}

double log_grow_ratio(const DecisionTree& before, const DecisionTree& after, int node,
                      const CovariateSchema& schema, const BartHyper& hyper,
                      const LeafStats& parent, const LeafStats& left, const LeafStats& right,
                      double sigma2, double tau2) {
  const TreeShape sb = tree_shape(before, schema);
  const TreeShape sa = tree_shape(after, schema);
  const double p_birth = birth_probability(sb);
  const double p_death = 1.0 - birth_probability(sa);
  const double p = node_split_probability(before, node, schema, hyper);
  const double pl = node_split_probability(after, after.node(node).left, schema, hyper);
  const double pr = node_split_probability(after, after.node(node).right, schema, hyper);
  const double proposal = std::log(p_death / static_cast<double>(sa.nog)) -
                          std::log(p_birth / static_cast<double>(sb.growable));
  const double prior = std::log(p) + std::log1p(-pl) + std::log1p(-pr) - std::log1p(-p);
  const double lik = leaf_log_marginal(left, sigma2, tau2) +
                     leaf_log_marginal(right, sigma2, tau2) -
                     leaf_log_marginal(parent, sigma2, tau2);
  return proposal + prior + lik;
}

double log_prune_ratio(const DecisionTree& before, const DecisionTree& after, int node,
                       const CovariateSchema& schema, const BartHyper& hyper,
                       const LeafStats& parent, const LeafStats& left, const LeafStats& right,
                       double sigma2, double tau2) {
  const TreeShape sb = tree_shape(before, schema);
  const TreeShape sa = tree_shape(after, schema);
  const double p_death = 1.0 - birth_probability(sb);
  const double p_birth = birth_probability(sa);
  const double p = node_split_probability(after, node, schema, hyper);
  const double pl = node_split_probability(before, before.node(node).left, schema, hyper);
  const double pr = node_split_probability(before, before.node(node).right, schema, hyper);
  const double proposal = std::log(p_birth / static_cast<double>(sa.growable)) -
                          std::log(p_death / static_cast<double>(sb.nog));
  const double prior = std::log1p(-p) - std::log(p) - std::log1p(-pl) - std::log1p(-pr);
  const double lik = leaf_log_marginal(parent, sigma2, tau2) -
                     leaf_log_marginal(left, sigma2, tau2) -
                     leaf_log_marginal(right, sigma2, tau2);
  return proposal + prior + lik;
}

BartChain::BartChain(const Matrix& x, CovariateSchema schema, const BartHyper& hyper, double tau,
                     double sigma, double sigma_lambda, bool update_sigma)
    : x_(x),
      schema_(std::move(schema)),
      hyper_(hyper),
      tau_(tau),
      sigma_(sigma),
      sigma_lambda_(sigma_lambda),
      update_sigma_(update_sigma),
      trees_(static_cast<std::size_t>(hyper.ntree)),
      leaf_of_(trees_.size(), std::vector<int>(static_cast<std::size_t>(x.rows()), 0)),
      total_(static_cast<std::size_t>(x.rows()), 0.0),
      scratch_(static_cast<std::size_t>(x.rows()), 0.0) {
  counters_.ratio_sum.assign(schema_.num_vars(), 0.0);
  counters_.proposals.assign(schema_.num_vars(), 0);
}

double BartChain::fit(std::size_t i) const {
  double s = 0.0;
  for (std::size_t m = 0; m < trees_.size(); ++m) s += trees_[m].node(leaf_of_[m][i]).value;
  return s;
}

void BartChain::backfit_step(std::span<const double> targets, RngStream& rng, bool record) {
  const std::size_t n = total_.size();
  if (targets.size() != n) throw DimensionMismatch("backfit_step: targets length mismatch");
  for (std::size_t i = 0; i < n; ++i) total_[i] = fit(i);
  for (std::size_t m = 0; m < trees_.size(); ++m) {
    const auto& tree = trees_[m];
    const auto& lo = leaf_of_[m];
    for (std::size_t i = 0; i < n; ++i)
      scratch_[i] = targets[i] - total_[i] + tree.node(lo[i]).value;
    update_tree(m, scratch_, rng, record);
    for (std::size_t i = 0; i < n; ++i) total_[i] = targets[i] - scratch_[i] + tree.node(lo[i]).value;
  }
  if (update_sigma_) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = targets[i] - total_[i];
      ssr += e * e;
    }
    const double shape = 0.5 * (hyper_.sigma_df + static_cast<double>(n));
    const double rate = 0.5 * (hyper_.sigma_df * sigma_lambda_ + ssr);
    sigma_ = std::sqrt(1.0 / stat::sample_gamma_rate(shape, rate, rng));
  }
}

void BartChain::update_tree(std::size_t m, std::span<const double> residual, RngStream& rng,
                            bool record) {
  const TreeShape shape = tree_shape(trees_[m], schema_);
  const double p_birth = birth_probability(shape);
  if (p_birth > 0.0 || shape.nog > 0) {
    ++proposed_;
    const bool grow = rng.uniform() < p_birth;
    const bool ok = grow ? propose_grow(m, residual, rng, record) : propose_prune(m, residual, rng);
    accepted_ += ok;
  }
  draw_leaves(m, residual, rng);
}

bool BartChain::propose_grow(std::size_t m, std::span<const double> residual, RngStream& rng,
                             bool record) {
  DecisionTree& tree = trees_[m];
  std::vector<int> growable;
  for (int leaf : tree.leaves())
    if (!splittable_vars(tree, leaf, schema_).empty()) growable.push_back(leaf);
  const int node = growable[static_cast<std::size_t>(rng.uniform() * growable.size())];
  const auto vars = splittable_vars(tree, node, schema_);
  const std::size_t var = vars[static_cast<std::size_t>(rng.uniform() * vars.size())];

  SplitRule rule;
  rule.var = static_cast<int>(var);
  rule.kind = schema_.types[var];
  const Admissible adm = tree.admissible(node, var, schema_);
  if (rule.kind == VarType::continuous) {
    const auto& u = schema_.values[var];
    const double lo = std::isinf(adm.lo) ? u.front() : adm.lo;
    const auto first = std::upper_bound(u.begin(), u.end(), lo);
    const auto last = std::lower_bound(u.begin(), u.end(), adm.hi);
    const auto count = static_cast<std::size_t>(last - first);
    rule.cutoff = *(first + static_cast<std::ptrdiff_t>(rng.uniform() * count));
  } else {
    std::vector<int> bits;
    for (int c = 0; c < 64; ++c)
      if ((adm.categories >> c) & 1u) bits.push_back(c);
    std::uint64_t mask = 0;
    const std::uint64_t full = adm.categories;
    while (mask == 0 || mask == full) {
      mask = 0;
      for (int c : bits)
        if (rng.uniform() < 0.5) mask |= std::uint64_t{1} << c;
    }
    rule.left_categories = mask;
  }

  const auto& lo = leaf_of_[m];
  LeafStats left, right;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] != node) continue;
    LeafStats& s = goes_left(rule, value(i, var), schema_) ? left : right;
    ++s.n;
    s.sum += residual[i];
  }
  if (left.n == 0 || right.n == 0) return false;
  const LeafStats parent{left.n + right.n, left.sum + right.sum};

  DecisionTree after = tree;
  const auto [l, r] = after.grow(node, rule);
  const double sigma2 = sigma_ * sigma_;
  const double log_r = log_grow_ratio(tree, after, node, schema_, hyper_, parent, left, right,
                                      sigma2, tau_ * tau_);
  if (record) {
    counters_.ratio_sum[var] += log_r >= 0.0 ? 1.0 : std::exp(log_r);
    ++counters_.proposals[var];
  }
  if (!(std::log(rng.uniform()) < log_r)) return false;
  tree = std::move(after);
  auto& lm = leaf_of_[m];
  for (std::size_t i = 0; i < lm.size(); ++i)
    if (lm[i] == node) lm[i] = goes_left(rule, value(i, var), schema_) ? l : r;
  return true;
}

bool BartChain::propose_prune(std::size_t m, std::span<const double> residual, RngStream& rng) {
  DecisionTree& tree = trees_[m];
  const auto nogs = tree.nog_nodes();
  const int node = nogs[static_cast<std::size_t>(rng.uniform() * nogs.size())];
  const int l = tree.node(node).left, r = tree.node(node).right;
  const auto& lm = leaf_of_[m];
  LeafStats left, right;
  for (std::size_t i = 0; i < lm.size(); ++i) {
    if (lm[i] == l) {
      ++left.n;
      left.sum += residual[i];
    } else if (lm[i] == r) {
      ++right.n;
      right.sum += residual[i];
    }
  }
  const LeafStats parent{left.n + right.n, left.sum + right.sum};
  DecisionTree after = tree;
  after.prune(node);
  const double sigma2 = sigma_ * sigma_;
  const double log_r = log_prune_ratio(tree, after, node, schema_, hyper_, parent, left, right,
                                       sigma2, tau_ * tau_);
  if (!(std::log(rng.uniform()) < log_r)) return false;
  tree = std::move(after);
  for (auto& v : leaf_of_[m])
    if (v == l || v == r) v = node;
  return true;
}

void BartChain::draw_leaves(std::size_t m, std::span<const double> residual, RngStream& rng) {
  DecisionTree& tree = trees_[m];
  const std::size_t cap = tree.capacity();
  std::vector<double> sum(cap, 0.0);
  std::vector<std::size_t> count(cap, 0);
  const auto& lm = leaf_of_[m];
  for (std::size_t i = 0; i < lm.size(); ++i) {
    sum[static_cast<std::size_t>(lm[i])] += residual[i];
    ++count[static_cast<std::size_t>(lm[i])];
  }
  const double sigma2 = sigma_ * sigma_;
  const double prec0 = 1.0 / (tau_ * tau_);
  for (int leaf : tree.leaves()) {
    const auto k = static_cast<std::size_t>(leaf);
    const double var = 1.0 / (static_cast<double>(count[k]) / sigma2 + prec0);
    const double mean = var * sum[k] / sigma2;
    tree.node(leaf).value = mean + std::sqrt(var) * rng.normal();
  }
}

namespace {

struct Calibration {
  double offset, tau, sigma, lambda;
};

void check_inputs(const Matrix& x, std::span<const VarType> types, std::size_t n) {
  if (static_cast<std::size_t>(x.rows()) != n)
    throw DimensionMismatch("bart: X has " + std::to_string(x.rows()) + " rows but response has " +
                            std::to_string(n));
  if (n < 10) throw InvalidArgument("bart: at least 10 observations are required");
  if (static_cast<Eigen::Index>(types.size()) != x.cols())
    throw DimensionMismatch("bart: one variable type per column is required");
  if (!x.allFinite()) throw InvalidArgument("bart: covariates must be finite");
}

BartPosterior run_chain(const Matrix& x, std::span<const VarType> types, const BartHyper& hyper,
                        const McmcSettings& mcmc, Link link, const Calibration& cal,
                        std::span<const int> t, std::span<const double> y, RngStream& rng) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  BartPosterior post;
  post.schema = CovariateSchema(x, {types.begin(), types.end()});
  post.link = link;
  post.hyper = hyper;
  post.offset = cal.offset;
  post.tau = cal.tau;
  post.sigma_lambda = cal.lambda;
  post.train_fits.resize(mcmc.ndpost, static_cast<Eigen::Index>(n));
  post.forests.reserve(static_cast<std::size_t>(mcmc.ndpost));

  BartChain chain(x, post.schema, hyper, cal.tau, cal.sigma, cal.lambda, link == Link::identity);
  std::vector<double> targets(n);
  if (link == Link::identity)
    for (std::size_t i = 0; i < n; ++i) targets[i] = y[i] - cal.offset;

  const long total = total_steps(mcmc);
  for (long it = 0; it < total; ++it) {
    if (link == Link::probit) {
      for (std::size_t i = 0; i < n; ++i) {
        const double mean = cal.offset + chain.fit(i);
        const double z = t[i] ? stat::sample_truncated_normal(mean, 1.0, 0.0, stat::kInf, rng)
                              : stat::sample_truncated_normal(mean, 1.0, -stat::kInf, 0.0, rng);
        targets[i] = z - cal.offset;
      }
    }
    const bool post_burn = it >= mcmc.nskip;
    chain.backfit_step(targets, rng, post_burn);
    if (is_kept_step(mcmc, it)) {
      const auto k = static_cast<Eigen::Index>(post.forests.size());
      post.forests.push_back(chain.forest());
      post.sigma.push_back(link == Link::identity ? chain.sigma() : 1.0);
      for (std::size_t i = 0; i < n; ++i)
        post.train_fits(k, static_cast<Eigen::Index>(i)) = cal.offset + chain.fit(i);
    }
  }
  post.counters = chain.counters();
  return post;
}

}  // namespace

BartPosterior fit_continuous_bart(const Matrix& x, std::span<const VarType> types,
                                  std::span<const double> y, const BartHyper& hyper,
                                  const McmcSettings& mcmc, RngStream& rng) {
  check_inputs(x, types, y.size());
  validate(hyper, y.size());
  validate(mcmc);
  for (double v : y)
    if (!std::isfinite(v)) throw InvalidArgument("bart: response must be finite");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*hi == *lo) throw InvalidArgument("bart: response is constant");
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  Calibration cal;
  cal.offset = mean;
  cal.tau = (*hi - *lo) / (2.0 * hyper.k * std::sqrt(static_cast<double>(hyper.ntree)));
  cal.sigma = sd;
  cal.lambda = sd * sd * stat::chi_square_quantile(1.0 - hyper.sigma_quantile, hyper.sigma_df) /
               hyper.sigma_df;
  return run_chain(x, types, hyper, mcmc, Link::identity, cal, {}, y, rng);
}

BartPosterior fit_probit_bart(const Matrix& x, std::span<const VarType> types,
                              std::span<const int> t, const BartHyper& hyper,
                              const McmcSettings& mcmc, RngStream& rng) {
  check_inputs(x, types, t.size());
  validate(hyper, t.size());
  validate(mcmc);
  std::size_t ones = 0;
  for (int v : t) {
    if (v != 0 && v != 1) throw InvalidArgument("probit bart: treatment must be 0/1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == t.size())
    throw InvalidArgument("probit bart: both classes must be present");
  Calibration cal;
  cal.offset = stat::normal_quantile(static_cast<double>(ones) / static_cast<double>(t.size()));
  cal.tau = 3.0 / (hyper.k * std::sqrt(static_cast<double>(hyper.ntree)));
  cal.sigma = 1.0;
  cal.lambda = 0.0;
  return run_chain(x, types, hyper, mcmc, Link::probit, cal, t, {}, rng);
}

BartPrediction predict(const BartPosterior& post, const Matrix& xnew, int threads) {
  if (static_cast<std::size_t>(xnew.cols()) != post.schema.num_vars())
    throw DimensionMismatch("predict: expected " + std::to_string(post.schema.num_vars()) +
                            " columns, got " + std::to_string(xnew.cols()));
  const auto nd = static_cast<Eigen::Index>(post.ndraws());
  const auto nn = xnew.rows();
  BartPrediction out;
  out.latent.resize(nd, nn);
  // Row-major copy so each observation is a contiguous span.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = xnew;
  const auto p = static_cast<std::size_t>(xnew.cols());
  util::parallel_for(static_cast<std::size_t>(nd), threads, [&](std::size_t k) {
    const auto& forest = post.forests[k];
    for (Eigen::Index j = 0; j < nn; ++j) {
      const std::span<const double> row(rows.data() + j * static_cast<Eigen::Index>(p), p);
      double s = 0.0;
      for (const auto& tree : forest) s += tree.predict(row, post.schema);
      out.latent(static_cast<Eigen::Index>(k), j) = post.offset + s;
    }
  });
  if (post.link == Link::probit)
    out.probability = out.latent.unaryExpr([](double v) { return stat::normal_cdf(v); });
  return out;
}

std::optional<VariableImportance> variable_importance(const BartPosterior& post) {
  const std::size_t p = post.schema.num_vars();
  if (post.forests.empty()) throw InvalidArgument("variable_importance: no kept draws");
  Vector vip = Vector::Zero(static_cast<Eigen::Index>(p));
  Vector within = Vector::Zero(static_cast<Eigen::Index>(p));
  std::size_t draws_with_rules = 0;
  std::size_t within_draws[2] = {0, 0};
  std::vector<double> counts(p);
  for (const auto& forest : post.forests) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const auto& tree : forest)
      for (const auto& nd : tree.nodes())
        if (nd.alive && !nd.is_leaf()) counts[static_cast<std::size_t>(nd.rule.var)] += 1.0;
    double total = 0.0, by_type[2] = {0.0, 0.0};
    for (std::size_t j = 0; j < p; ++j) {
      total += counts[j];
      by_type[static_cast<int>(post.schema.types[j])] += counts[j];
    }
    if (total == 0.0) continue;
    ++draws_with_rules;
    for (std::size_t j = 0; j < p; ++j) vip[static_cast<Eigen::Index>(j)] += counts[j] / total;
    for (int ty = 0; ty < 2; ++ty) {
      if (by_type[ty] == 0.0) continue;
      ++within_draws[ty];
      for (std::size_t j = 0; j < p; ++j)
        if (static_cast<int>(post.schema.types[j]) == ty)
          within[static_cast<Eigen::Index>(j)] += counts[j] / by_type[ty];
    }
  }
  if (draws_with_rules == 0) return std::nullopt;
  VariableImportance out;
  out.vip = vip / static_cast<double>(draws_with_rules);
  out.within_type_vip = within;
  for (std::size_t j = 0; j < p; ++j) {
    const int ty = static_cast<int>(post.schema.types[j]);
    if (within_draws[ty] > 0)
      out.within_type_vip[static_cast<Eigen::Index>(j)] /= static_cast<double>(within_draws[ty]);
  }
  out.mi = Vector::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p && j < post.counters.proposals.size(); ++j)
    if (post.counters.proposals[j] > 0)
      out.mi[static_cast<Eigen::Index>(j)] =
          post.counters.ratio_sum[j] / static_cast<double>(post.counters.proposals[j]);
  return out;
}

}  // namespace dpmqte::bart
