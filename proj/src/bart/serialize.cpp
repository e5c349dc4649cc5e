#include "dpmqte/bart/serialize.hpp"

#include "dpmqte/error.hpp"

namespace dpmqte::bart {

using nlohmann::json;

namespace {

json tree_to_json(const DecisionTree& tree, const CovariateSchema& schema) {
  json nodes = json::array();
  for (std::size_t id = 0; id < tree.capacity(); ++id) {
    const auto& nd = tree.node(static_cast<int>(id));
    if (!nd.alive) continue;
    json e = {{"id", id}, {"parent", nd.parent}};
    if (nd.is_leaf()) {
      e["value"] = nd.value;
    } else {
      e["left"] = nd.left;
      e["right"] = nd.right;
      e["var"] = nd.rule.var;
      if (nd.rule.kind == VarType::continuous) {
        e["cutoff"] = nd.rule.cutoff;
      } else {
        json cats = json::array();
        const auto& levels = schema.values[static_cast<std::size_t>(nd.rule.var)];
        for (std::size_t c = 0; c < levels.size(); ++c)
          if ((nd.rule.left_categories >> c) & 1u) cats.push_back(levels[c]);
        e["left_categories"] = cats;
      }
    }
    nodes.push_back(std::move(e));
  }
  return nodes;
}

DecisionTree tree_from_json(const json& nodes, const CovariateSchema& schema) {
  std::size_t cap = 0;
  for (const auto& e : nodes) cap = std::max(cap, e.at("id").get<std::size_t>() + 1);
  std::vector<TreeNode> table(cap);
  for (auto& nd : table) nd.alive = false;
  for (const auto& e : nodes) {
    auto& nd = table[e.at("id").get<std::size_t>()];
    nd.alive = true;
    nd.parent = e.at("parent").get<int>();
    if (e.contains("value")) {
      nd.value = e.at("value").get<double>();
      continue;
    }
    nd.left = e.at("left").get<int>();
    nd.right = e.at("right").get<int>();
    nd.rule.var = e.at("var").get<int>();
    if (nd.rule.var < 0 || static_cast<std::size_t>(nd.rule.var) >= schema.num_vars())
      throw InvalidArgument("forest json: rule variable out of range");
    if (e.contains("cutoff")) {
      nd.rule.kind = VarType::continuous;
      nd.rule.cutoff = e.at("cutoff").get<double>();
    } else {
      nd.rule.kind = VarType::categorical;
      for (double v : e.at("left_categories")) {
        const int c = schema.category_index(static_cast<std::size_t>(nd.rule.var), v);
        if (c < 0) throw InvalidArgument("forest json: unknown category level");
        nd.rule.left_categories |= std::uint64_t{1} << c;
      }
    }
  }
  // Depth is not serialized; recover it from the parent links.
  for (auto& nd : table) {
    if (!nd.alive) continue;
    int d = 0;
    for (int p = nd.parent; p >= 0; p = table[static_cast<std::size_t>(p)].parent) ++d;
    nd.depth = d;
  }
  return DecisionTree::from_nodes(std::move(table));
}

}  // namespace

json to_json(const BartPosterior& post) {
  json types = json::array();
  for (auto t : post.schema.types) types.push_back(t == VarType::continuous ? "continuous" : "categorical");
  json draws = json::array();
  for (const auto& forest : post.forests) {
    json trees = json::array();
    for (const auto& tree : forest) trees.push_back(tree_to_json(tree, post.schema));
    draws.push_back(std::move(trees));
  }
  return {{"link", post.link == Link::identity ? "identity" : "probit"},
          {"offset", post.offset},
          {"types", types},
          {"levels", post.schema.values},
          {"sigma", post.sigma},
          {"forests", draws}};
}

BartPosterior posterior_from_json(const json& j) {
  BartPosterior post;
  post.link = j.at("link").get<std::string>() == "probit" ? Link::probit : Link::identity;
  post.offset = j.at("offset").get<double>();
  for (const auto& t : j.at("types"))
    post.schema.types.push_back(t.get<std::string>() == "categorical" ? VarType::categorical
                                                                      : VarType::continuous);
  post.schema.values = j.at("levels").get<std::vector<std::vector<double>>>();
  if (post.schema.values.size() != post.schema.types.size())
    throw InvalidArgument("forest json: levels and types disagree");
  post.sigma = j.at("sigma").get<std::vector<double>>();
  for (const auto& trees : j.at("forests")) {
    std::vector<DecisionTree> forest;
    for (const auto& t : trees) forest.push_back(tree_from_json(t, post.schema));
    post.forests.push_back(std::move(forest));
  }
  return post;
}

}  // namespace dpmqte::bart
