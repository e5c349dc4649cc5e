#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "run.hpp"

using namespace dpmqte::cli;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool validate_only = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config,-c", o.config, "JSON file with all parameters");
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--threads", o.threads, "Worker count (overrides the config)");
  sub->add_option("--out", o.out, "Output directory (overrides the config)");
  sub->add_flag("--validate", o.validate_only, "Check the configuration and input, then exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonparametric density and quantile treatment effect estimation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Overrides o;
  const std::pair<const char*, const char*> commands[] = {
      {"bart", "Fit continuous or probit BART"},
      {"density", "Joint density of the selected columns from a DP mixture"},
      {"cdensity", "Conditional density, CDF and mean of the response given confounders"},
      {"qte", "Quantile treatment effects"},
      {"diag", "Sampler diagnostics: traces and autocorrelations"},
      {"gen", "Write one of the built-in synthetic data sets"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  nlohmann::json params = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) {
      std::cerr << "validation failed (1 problem):\n  - config: cannot open " << o.config << '\n';
      return kExitValidation;
    }
    try {
      params = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "validation failed (1 problem):\n  - config: " << e.what() << '\n';
      return kExitValidation;
    }
  }
  if (params.is_object()) {
    if (o.seed) params["seed"] = *o.seed;
    if (o.threads) params["threads"] = *o.threads;
    if (o.out) params["out"] = *o.out;
  }

  std::vector<std::string> issues;
  const auto config = make_config(command, std::move(params), issues);
  if (o.validate_only || !issues.empty()) {
    if (issues.empty()) issues = validate(config);
    else {
      const auto more = validate(config);
      issues.insert(issues.end(), more.begin(), more.end());
    }
    if (issues.empty()) {
      std::cout << "configuration is valid\n";
      return kExitOk;
    }
    std::cerr << "validation failed (" << issues.size() << " problem" << (issues.size() == 1 ? "" : "s") << "):\n";
    for (const auto& s : issues) std::cerr << "  - " << s << '\n';
    return kExitValidation;
  }
  return run(config);
}
