#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "dpmqte/stat/linalg.hpp"

namespace dpmqte::bart {

enum class VarType { continuous, categorical };

/// Per-column description of the training covariates. Continuous columns keep
/// their sorted unique values (the only admissible cutoffs); categorical
/// columns keep their sorted category codes (at most 64 per column).
struct CovariateSchema {
  std::vector<VarType> types;
  std::vector<std::vector<double>> values;

  CovariateSchema() = default;
  CovariateSchema(const Matrix& x, std::vector<VarType> types);

  std::size_t num_vars() const noexcept { return types.size(); }
  /// Index of `value` among the categories of `var`, or -1 if unseen.
  int category_index(std::size_t var, double value) const;
};

struct SplitRule {
  int var = -1;
  VarType kind = VarType::continuous;
  double cutoff = 0.0;                 // continuous: x < cutoff goes left
  std::uint64_t left_categories = 0;   // categorical: bit c set sends category c left
};

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  bool alive = true;
  SplitRule rule;
  double value = 0.0;

  bool is_leaf() const noexcept { return left < 0; }
};

/// Where a node may still split on one variable, given its ancestors' rules.
struct Admissible {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::uint64_t categories = 0;
};

/// Binary decision tree over a CovariateSchema. Node 0 is the root. Pruned
/// nodes are marked dead and their slots reused, so indices of live nodes are
/// stable across moves.
class DecisionTree {
 public:
  DecisionTree();

  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  TreeNode& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t capacity() const noexcept { return nodes_.size(); }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  std::vector<int> leaves() const;
  /// Internal nodes whose two children are both leaves.
  std::vector<int> nog_nodes() const;
  std::size_t num_leaves() const;
  bool is_stump() const noexcept { return nodes_[0].is_leaf(); }

  /// Turns leaf `id` into an internal node with two fresh leaf children.
  /// Returns (left, right).
  std::pair<int, int> grow(int id, const SplitRule& rule);
  /// Collapses nog node `id` back into a leaf.
  void prune(int id);

  Admissible admissible(int id, std::size_t var, const CovariateSchema& schema) const;

  /// Leaf reached by an observation given as one value per variable.
  int find_leaf(std::span<const double> row, const CovariateSchema& schema) const;
  double predict(std::span<const double> row, const CovariateSchema& schema) const {
    return node(find_leaf(row, schema)).value;
  }

  /// Rebuild from an explicit node table (used by deserialization).
  static DecisionTree from_nodes(std::vector<TreeNode> nodes);

 private:
  std::vector<TreeNode> nodes_;
  std::vector<int> free_;
};

/// Number of admissible cutoffs (continuous) or nonempty proper left subsets
/// (categorical) for `var` at `node`. Zero means the variable cannot split there.
std::uint64_t count_split_choices(const DecisionTree& tree, int node, std::size_t var,
                                  const CovariateSchema& schema);

/// Variables with at least one admissible split at `node`.
std::vector<std::size_t> splittable_vars(const DecisionTree& tree, int node,
                                         const CovariateSchema& schema);

/// Whether observation row goes left under `rule`.
bool goes_left(const SplitRule& rule, double value, const CovariateSchema& schema);

}  // namespace dpmqte::bart
