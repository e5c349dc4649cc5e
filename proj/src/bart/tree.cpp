#include "dpmqte/bart/tree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "dpmqte/error.hpp"

namespace dpmqte::bart {

CovariateSchema::CovariateSchema(const Matrix& x, std::vector<VarType> t) : types(std::move(t)) {
  if (static_cast<Eigen::Index>(types.size()) != x.cols())
    throw DimensionMismatch("covariate types: expected " + std::to_string(x.cols()) + " entries");
  values.resize(types.size());
  for (std::size_t j = 0; j < types.size(); ++j) {
    auto& v = values[j];
    v.assign(x.col(static_cast<Eigen::Index>(j)).data(),
             x.col(static_cast<Eigen::Index>(j)).data() + x.rows());
    for (double e : v)
      if (!std::isfinite(e)) throw InvalidArgument("covariates must be finite");
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (types[j] == VarType::categorical && v.size() > 64)
      throw InvalidArgument("categorical covariate " + std::to_string(j) +
                            " has more than 64 levels");
  }
}

int CovariateSchema::category_index(std::size_t var, double value) const {
  const auto& v = values[var];
  const auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) return -1;
  return static_cast<int>(it - v.begin());
}

DecisionTree::DecisionTree() : nodes_(1) {}

std::vector<int> DecisionTree::leaves() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].alive && nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  return out;
}

std::size_t DecisionTree::num_leaves() const {
  std::size_t n = 0;
  for (const auto& nd : nodes_) n += nd.alive && nd.is_leaf();
  return n;
}

std::vector<int> DecisionTree::nog_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nd = nodes_[i];
    if (!nd.alive || nd.is_leaf()) continue;
    if (node(nd.left).is_leaf() && node(nd.right).is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::pair<int, int> DecisionTree::grow(int id, const SplitRule& rule) {
  if (!node(id).alive || !node(id).is_leaf()) throw InvalidArgument("grow: node is not a leaf");
  int kids[2];
  for (int& k : kids) {
    if (!free_.empty()) {
      k = free_.back();
      free_.pop_back();
      node(k) = TreeNode{};
    } else {
      k = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
    }
    node(k).parent = id;
    node(k).depth = node(id).depth + 1;
  }
  node(id).left = kids[0];
  node(id).right = kids[1];
  node(id).rule = rule;
  return {kids[0], kids[1]};
}

void DecisionTree::prune(int id) {
  auto& nd = node(id);
  if (nd.is_leaf() || !node(nd.left).is_leaf() || !node(nd.right).is_leaf())
    throw InvalidArgument("prune: node does not have two leaf children");
  for (int k : {nd.left, nd.right}) {
    node(k).alive = false;
    free_.push_back(k);
  }
  nd.left = nd.right = -1;
  nd.rule = SplitRule{};
}

Admissible DecisionTree::admissible(int id, std::size_t var, const CovariateSchema& schema) const {
  Admissible a;
  const std::size_t ncat = schema.values[var].size();
  if (schema.types[var] == VarType::categorical)
    a.categories = ncat >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << ncat) - 1);
  int child = id;
  for (int p = node(id).parent; p >= 0; child = p, p = node(p).parent) {
    const auto& r = node(p).rule;
    if (r.var != static_cast<int>(var)) continue;
    const bool from_left = node(p).left == child;
    if (r.kind == VarType::continuous) {
      if (from_left)
        a.hi = std::min(a.hi, r.cutoff);
      else
        a.lo = std::max(a.lo, r.cutoff);
    } else {
      a.categories &= from_left ? r.left_categories : ~r.left_categories;
    }
  }
  return a;
}

bool goes_left(const SplitRule& rule, double value, const CovariateSchema& schema) {
  if (rule.kind == VarType::continuous) return value < rule.cutoff;
  const int c = schema.category_index(static_cast<std::size_t>(rule.var), value);
  return c >= 0 && ((rule.left_categories >> c) & 1u);
}

int DecisionTree::find_leaf(std::span<const double> row, const CovariateSchema& schema) const {
  int id = 0;
  while (!node(id).is_leaf()) {
    const auto& r = node(id).rule;
    id = goes_left(r, row[static_cast<std::size_t>(r.var)], schema) ? node(id).left
                                                                      : node(id).right;
  }
  return id;
}

DecisionTree DecisionTree::from_nodes(std::vector<TreeNode> nodes) {
  if (nodes.empty()) throw InvalidArgument("tree has no nodes");
  DecisionTree t;
  t.nodes_ = std::move(nodes);
  for (std::size_t i = 0; i < t.nodes_.size(); ++i)
    if (!t.nodes_[i].alive) t.free_.push_back(static_cast<int>(i));
  return t;
}

std::uint64_t count_split_choices(const DecisionTree& tree, int node, std::size_t var,
                                  const CovariateSchema& schema) {
  const Admissible a = tree.admissible(node, var, schema);
  if (schema.types[var] == VarType::categorical) {
    const int c = std::popcount(a.categories);
    if (c < 2) return 0;
    return c >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << c) - 2;
  }
  const auto& u = schema.values[var];
  if (u.empty()) return 0;
  const double lo = std::isinf(a.lo) ? u.front() : a.lo;
  const auto first = std::upper_bound(u.begin(), u.end(), lo);
  const auto last = std::lower_bound(u.begin(), u.end(), a.hi);
  return last > first ? static_cast<std::uint64_t>(last - first) : 0;
}

std::vector<std::size_t> splittable_vars(const DecisionTree& tree, int node,
                                         const CovariateSchema& schema) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < schema.num_vars(); ++j)
    if (count_split_choices(tree, node, j, schema) > 0) out.push_back(j);
  return out;
}

}  // namespace dpmqte::bart
