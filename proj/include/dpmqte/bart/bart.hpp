#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dpmqte/bart/tree.hpp"
#include "dpmqte/mcmc.hpp"
#include "dpmqte/stat/linalg.hpp"
#include "dpmqte/stat/rng.hpp"

namespace dpmqte::bart {

enum class SplitPrior { polynomial, exponential };
enum class Link { identity, probit };

struct BartHyper {
  int ntree = 50;
  SplitPrior split_prior = SplitPrior::polynomial;
  double base = 0.95;
  double power = 2.0;
  double k = 2.0;               // leaf prior sd scale
  double sigma_df = 3.0;
  double sigma_quantile = 0.9;  // prior quantile at which the data-sd guess sits

  /// Defaults for each split prior: (0.95, 2) polynomial, 0.5 exponential.
  static BartHyper defaults(SplitPrior kind);
};

/// Throws InvalidArgument when the hyperparameters are outside their domain
/// for a training set of size n.
void validate(const BartHyper& hyper, std::size_t n);

using dpmqte::McmcSettings;

/// Prior probability that a node at `depth` splits.
double split_probability(int depth, const BartHyper& hyper);

/// Sufficient statistics of the partial residuals in one leaf.
struct LeafStats {
  std::size_t n = 0;
  double sum = 0.0;
};

/// log ∫ N(r | μ, σ²) N(μ | 0, τ²) dμ up to the factor shared by any split of
/// the same observations.
double leaf_log_marginal(const LeafStats& s, double sigma2, double tau2);

/// Counts that the grow/prune proposal probabilities depend on.
struct TreeShape {
  std::size_t growable = 0;  // leaves with at least one admissible split
  std::size_t nog = 0;       // internal nodes with two leaf children
  bool stump = true;
};

TreeShape tree_shape(const DecisionTree& tree, const CovariateSchema& schema);
double birth_probability(const TreeShape& shape);

/// Prior probability that `node` splits: split_probability(depth) when some
/// rule is admissible there, else 0.
double node_split_probability(const DecisionTree& tree, int node, const CovariateSchema& schema,
                              const BartHyper& hyper);

/// Log Metropolis–Hastings ratio for growing leaf `node` of `before` into
/// `after`. Rule-choice probabilities cancel between proposal and prior.
double log_grow_ratio(const DecisionTree& before, const DecisionTree& after, int node,
                      const CovariateSchema& schema, const BartHyper& hyper,
                      const LeafStats& parent, const LeafStats& left, const LeafStats& right,
                      double sigma2, double tau2);

/// Log ratio for pruning nog `node` of `before` into `after`.
double log_prune_ratio(const DecisionTree& before, const DecisionTree& after, int node,
                       const CovariateSchema& schema, const BartHyper& hyper,
                       const LeafStats& parent, const LeafStats& left, const LeafStats& right,
                       double sigma2, double tau2);

/// Per-variable Metropolis accumulators for MI, filled after burn-in.
struct ImportanceCounters {
  std::vector<double> ratio_sum;         // Σ min(1, r) over grow proposals
  std::vector<std::uint64_t> proposals;  // grow proposals per variable
};

struct BartPosterior {
  CovariateSchema schema;
  Link link = Link::identity;
  BartHyper hyper;
  double offset = 0.0;
  double tau = 0.0;            // leaf prior sd
  double sigma_lambda = 0.0;   // inverse-gamma scale (identity link)
  std::vector<std::vector<DecisionTree>> forests;  // per kept draw
  std::vector<double> sigma;                       // per kept draw (identity link)
  Matrix train_fits;                               // kept draws × n, latent scale
  ImportanceCounters counters;

  std::size_t ndraws() const noexcept { return forests.size(); }
};

/// Mutable state of one chain. Exposed so a single backfitting sweep can be
/// driven and inspected directly.
class BartChain {
 public:
  BartChain(const Matrix& x, CovariateSchema schema, const BartHyper& hyper, double tau,
            double sigma, double sigma_lambda, bool update_sigma);

  /// One sweep: for each tree, a grow/prune proposal against the partial
  /// residuals of `targets`, then fresh leaf values; then σ² when enabled.
  /// Grow proposals feed the MI counters only when `record` is set.
  void backfit_step(std::span<const double> targets, stat::RngStream& rng, bool record = false);

  const std::vector<DecisionTree>& forest() const noexcept { return trees_; }
  std::vector<DecisionTree>& forest() noexcept { return trees_; }
  double sigma() const noexcept { return sigma_; }
  /// Σ_m g(x_i; T_m, μ_m) summed in tree order.
  double fit(std::size_t i) const;
  const ImportanceCounters& counters() const noexcept { return counters_; }
  std::uint64_t accepted() const noexcept { return accepted_; }
  std::uint64_t proposed() const noexcept { return proposed_; }

 private:
  void update_tree(std::size_t m, std::span<const double> residual, stat::RngStream& rng,
                   bool record);
  bool propose_grow(std::size_t m, std::span<const double> residual, stat::RngStream& rng,
                    bool record);
  bool propose_prune(std::size_t m, std::span<const double> residual, stat::RngStream& rng);
  void draw_leaves(std::size_t m, std::span<const double> residual, stat::RngStream& rng);
  double value(std::size_t i, std::size_t var) const {
    return x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(var));
  }

  const Matrix& x_;
  CovariateSchema schema_;
  BartHyper hyper_;
  double tau_;
  double sigma_;
  double sigma_lambda_;
  bool update_sigma_;
  std::vector<DecisionTree> trees_;
  std::vector<std::vector<int>> leaf_of_;  // tree × observation
  std::vector<double> total_;              // Σ_m fits
  std::vector<double> scratch_;
  ImportanceCounters counters_;
  std::uint64_t accepted_ = 0;
  std::uint64_t proposed_ = 0;
};

BartPosterior fit_continuous_bart(const Matrix& x, std::span<const VarType> types,
                                  std::span<const double> y, const BartHyper& hyper,
                                  const McmcSettings& mcmc, stat::RngStream& rng);

BartPosterior fit_probit_bart(const Matrix& x, std::span<const VarType> types,
                              std::span<const int> t, const BartHyper& hyper,
                              const McmcSettings& mcmc, stat::RngStream& rng);

struct BartPrediction {
  Matrix latent;       // draws × n_new
  Matrix probability;  // Φ(latent) for the probit link, empty otherwise
};

/// Per-draw forest evaluation. `threads` > 1 splits the draws across workers;
/// results do not depend on the thread count.
BartPrediction predict(const BartPosterior& posterior, const Matrix& xnew, int threads = 1);

/// Rule shares per kept draw, averaged over draws. MI is the mean capped
/// Metropolis ratio of post-burn-in grow proposals on each variable.
struct VariableImportance {
  Vector vip;
  Vector within_type_vip;  // entries sum to 1 within each type that has rules
  Vector mi;
};

/// Empty when no kept draw contains any split rule.
std::optional<VariableImportance> variable_importance(const BartPosterior& posterior);

}  // namespace dpmqte::bart
