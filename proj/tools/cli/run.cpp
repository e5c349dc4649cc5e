#include "run.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include "csv.hpp"
#include "dpmqte/bart/bart.hpp"
#include "dpmqte/bart/serialize.hpp"
#include "dpmqte/datagen/datagen.hpp"
#include "dpmqte/density/density.hpp"
#include "dpmqte/density/export.hpp"
#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/dpm/dpm.hpp"
#include "dpmqte/dpm/serialize.hpp"
#include "dpmqte/error.hpp"
#include "dpmqte/qte/export.hpp"
#include "dpmqte/qte/qte.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Issues = std::vector<std::string>;

namespace {

const std::set<std::string> kCommands{"bart", "density", "cdensity", "qte", "diag", "gen"};

// ---------------------------------------------------------------------------
// Typed access to one JSON object. Every key read is remembered so leftovers
// can be reported as unknown (usually a typo).

template <class T>
bool fits(const json& j) {
  if constexpr (std::is_same_v<T, bool>) return j.is_boolean();
  else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) return j.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) return j.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) return j.is_number();
  else if constexpr (std::is_same_v<T, std::string>) return j.is_string();
  else if constexpr (std::is_same_v<T, std::vector<double>>)
    return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); });
  else if constexpr (std::is_same_v<T, std::vector<std::string>>)
    return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_string(); });
  else if constexpr (std::is_same_v<T, std::vector<std::vector<double>>>)
    return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& v) { return fits<std::vector<double>>(v); });
  else static_assert(sizeof(T) == 0, "unsupported parameter type");
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) return "a non-negative integer";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, std::vector<double>>) return "an array of numbers";
  else if constexpr (std::is_same_v<T, std::vector<std::string>>) return "an array of strings";
  else return "an array of number arrays";
}

class Params {
 public:
  Params(const json* node, std::string path, Issues* issues)
      : node_(node), path_(std::move(path)), issues_(issues), used_(std::make_shared<std::set<std::string>>()) {}

  template <class T>
  std::optional<T> maybe(const std::string& key) {
    used_->insert(key);
    if (!node_ || !node_->contains(key)) return std::nullopt;
    const json& v = (*node_)[key];
    if (!fits<T>(v)) {
      issue(key, std::string("expected ") + type_name<T>());
      return std::nullopt;
    }
    return v.get<T>();
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    auto v = maybe<T>(key);
    return v ? std::move(*v) : std::move(fallback);
  }

  Params block(const std::string& key) {
    used_->insert(key);
    if (node_ && node_->contains(key)) {
      const json& v = (*node_)[key];
      if (v.is_object()) return Params(&v, name(key), issues_);
      issue(key, "expected an object");
    }
    return Params(nullptr, name(key), issues_);
  }

  void mark(std::initializer_list<const char*> keys) {
    for (const char* k : keys) used_->insert(k);
  }

  /// Reports keys that were never read.
  void finish() const {
    if (!node_) return;
    for (const auto& item : node_->items())
      if (!used_->count(item.key())) issues_->push_back(name(item.key()) + ": unknown key");
  }

  void issue(const std::string& key, const std::string& msg) const { issues_->push_back(name(key) + ": " + msg); }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  Issues& issues() const { return *issues_; }

 private:
  const json* node_;
  std::string path_;
  Issues* issues_;
  std::shared_ptr<std::set<std::string>> used_;
};

template <class F>
void guard(Issues& issues, const std::string& context, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    issues.push_back(context + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared parameter blocks.

McmcSettings read_mcmc(Params& p, McmcSettings fallback, const std::string& prefix = "") {
  McmcSettings m;
  m.nskip = p.get<int>(prefix + "nskip", fallback.nskip);
  m.ndpost = p.get<int>(prefix + "ndpost", fallback.ndpost);
  m.keepevery = p.get<int>(prefix + "keepevery", fallback.keepevery);
  guard(p.issues(), p.name(prefix + "mcmc"), [&] { validate(m); });
  return m;
}

struct BandSpec {
  bool compute = true;
  density::BandKind kind = density::BandKind::hpd;
  double level = 0.95;
};

BandSpec read_band(Params& p) {
  BandSpec b;
  b.compute = p.get<bool>("compute_band", true);
  guard(p.issues(), p.name("type_band"), [&] { b.kind = density::parse_band(p.get<std::string>("type_band", "hpd")); });
  b.level = p.get<double>("level", 0.95);
  if (!(b.level > 0.0 && b.level < 1.0)) p.issue("level", "must be in (0, 1)");
  return b;
}

struct DpmSpec {
  dpm::Sampler sampler = dpm::Sampler::blocked;
  bool update_alpha = true;
  bool hyperpriors = true;
  int nclusters = 50;
  std::optional<double> alpha, a0, b0, lambda, gamma1, gamma2;
  McmcSettings mcmc;
  double epsilon = 0.01;
  std::size_t max_sticks = 100000;
  bool cache = true;
};

/// `overrides` allows the scalar prior settings to be changed; the qte
/// pipeline builds its own per-fit defaults and does not take them.
DpmSpec read_dpm(Params p, bool overrides, McmcSettings fallback) {
  DpmSpec s;
  guard(p.issues(), p.name("method"), [&] { s.sampler = dpm::parse_sampler(p.get<std::string>("method", "blocked")); });
  s.update_alpha = p.get<bool>("update_alpha", true);
  s.hyperpriors = p.get<bool>("hyperpriors", true);
  s.nclusters = p.get<int>("nclusters", 50);
  // qte::check repeats this one for the qte block.
  if (overrides && s.sampler == dpm::Sampler::blocked && s.nclusters < 2)
    p.issue("nclusters", "blocked sampler needs N >= 2");
  if (overrides) {
    s.alpha = p.maybe<double>("alpha");
    s.a0 = p.maybe<double>("a0");
    s.b0 = p.maybe<double>("b0");
    s.lambda = p.maybe<double>("lambda");
    s.gamma1 = p.maybe<double>("gamma1");
    s.gamma2 = p.maybe<double>("gamma2");
  }
  s.mcmc = read_mcmc(p, fallback);
  s.epsilon = p.get<double>("epsilon", 0.01);
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) p.issue("epsilon", "must be in (0, 1)");
  const auto max_sticks = p.get<std::int64_t>("max_sticks", 100000);
  if (max_sticks < 1) p.issue("max_sticks", "must be >= 1");
  s.max_sticks = static_cast<std::size_t>(std::max<std::int64_t>(max_sticks, 1));
  s.cache = p.get<bool>("cache", true);
  p.finish();
  return s;
}

dpm::DpmHyper build_hyper(const DpmSpec& s, const Matrix& data, Issues& issues, const std::string& ctx) {
  dpm::DpmHyper h;
  guard(issues, ctx, [&] {
    h = dpm::default_hypers(data, s.update_alpha, s.hyperpriors, s.nclusters);
    if (s.alpha) h.alpha = *s.alpha;
    if (s.a0) h.a0 = *s.a0;
    if (s.b0) h.b0 = *s.b0;
    if (s.lambda) h.lambda = *s.lambda;
    if (s.gamma1) h.gamma1 = *s.gamma1;
    if (s.gamma2) h.gamma2 = *s.gamma2;
    dpm::validate(h, s.sampler);
  });
  return h;
}

bart::BartHyper read_bart_hyper(Params& p) {
  bart::SplitPrior prior = bart::SplitPrior::polynomial;
  const auto name = p.get<std::string>("split_prior", "polynomial");
  if (name == "exponential") prior = bart::SplitPrior::exponential;
  else if (name != "polynomial") p.issue("split_prior", "expected polynomial or exponential, got '" + name + "'");
  auto h = bart::BartHyper::defaults(prior);
  h.ntree = p.get<int>("ntree", h.ntree);
  h.base = p.get<double>("base", h.base);
  h.power = p.get<double>("power", h.power);
  h.k = p.get<double>("k", h.k);
  h.sigma_df = p.get<double>("sigma_df", h.sigma_df);
  h.sigma_quantile = p.get<double>("sigma_quantile", h.sigma_quantile);
  return h;
}

// ---------------------------------------------------------------------------
// Input columns.

struct Columns {
  int response = -1;
  int treatment = -1;
  std::vector<int> confounders;
  std::vector<bart::VarType> types;
  std::vector<int> variables;
};

int column_index(const Table& t, Params& cols, const std::string& key, bool required) {
  const auto name = cols.maybe<std::string>(key);
  if (!name) {
    if (required) cols.issue(key, "required");
    return -1;
  }
  const int i = t.find(*name);
  if (i < 0) cols.issue(key, "column '" + *name + "' not found in the input");
  return i;
}

std::vector<int> column_list(const Table& t, Params& cols, const std::string& key, std::vector<int> fallback) {
  const auto names = cols.maybe<std::vector<std::string>>(key);
  if (!names) return fallback;
  std::vector<int> idx;
  for (const auto& n : *names) {
    const int i = t.find(n);
    if (i < 0) cols.issue(key, "column '" + n + "' not found in the input");
    else idx.push_back(i);
  }
  if (idx.empty() && names->empty()) cols.issue(key, "must name at least one column");
  return idx;
}

/// Regression roles: response, optional treatment, confounders (defaulting
/// to every other column) and their categorical subset.
Columns regression_columns(const Table& t, Params cols, bool need_treatment) {
  Columns c;
  c.response = column_index(t, cols, "response", true);
  c.treatment = column_index(t, cols, "treatment", need_treatment);
  std::vector<int> rest;
  for (int j = 0; j < static_cast<int>(t.names.size()); ++j)
    if (j != c.response && j != c.treatment) rest.push_back(j);
  c.confounders = column_list(t, cols, "confounders", rest);
  for (int j : c.confounders)
    if (j == c.response || (j >= 0 && j == c.treatment))
      cols.issue("confounders", "'" + t.names[static_cast<std::size_t>(j)] + "' also has another role");
  if (c.confounders.empty()) cols.issue("confounders", "no confounder columns");
  c.types.assign(c.confounders.size(), bart::VarType::continuous);
  for (int j : column_list(t, cols, "categorical", {})) {
    const auto it = std::find(c.confounders.begin(), c.confounders.end(), j);
    if (it == c.confounders.end())
      cols.issue("categorical", "'" + t.names[static_cast<std::size_t>(j)] + "' is not a confounder");
    else
      c.types[static_cast<std::size_t>(it - c.confounders.begin())] = bart::VarType::categorical;
  }
  cols.mark({"variables"});
  cols.finish();
  return c;
}

Columns variable_columns(const Table& t, Params cols) {
  Columns c;
  std::vector<int> all(t.names.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<int>(j);
  c.variables = column_list(t, cols, "variables", all);
  if (c.variables.empty()) cols.issue("variables", "no columns selected");
  cols.mark({"response", "treatment", "confounders", "categorical"});
  cols.finish();
  return c;
}

/// Rows of `path` restricted to the named confounder columns, in order.
std::optional<Matrix> read_xpred(const std::string& path, const Table& input, const std::vector<int>& confounders,
                                 Params& p, const std::string& key) {
  std::optional<Matrix> out;
  guard(p.issues(), p.name(key), [&] {
    const auto t = read_csv(path);
    std::vector<int> idx;
    for (int j : confounders) {
      const auto& name = input.names[static_cast<std::size_t>(j)];
      const int i = t.find(name);
      if (i < 0) throw InvalidArgument(path + " has no column '" + name + "'");
      idx.push_back(i);
    }
    out = t.columns(idx);
  });
  return out;
}

std::vector<double> column_vector(const Matrix& m, Eigen::Index c) {
  return {m.col(c).data(), m.col(c).data() + m.rows()};
}

// ---------------------------------------------------------------------------
// Output directory handling.

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json versions() {
  return {{"dpmqte", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"rng", std::string(stat::RngStream::algorithm())}};
}

/// Owns the output directory for one run. A FAILED marker exists from the
/// first write until the run completes, so a crash never leaves partial
/// output unmarked.
class Output {
 public:
  explicit Output(const RunConfig& c) : config_(c), started_(utc_now()) {
    fs::create_directories(c.out);
    std::ofstream(c.out / "FAILED") << "run started " << started_ << " and has not completed\n";
  }

  std::ofstream file(const std::string& name) {
    files_.push_back(name);
    std::ofstream f(config_.out / name);
    if (!f) throw Error("cannot write " + (config_.out / name).string());
    f << std::setprecision(17);
    return f;
  }

  bool csv() const { return config_.csv; }
  json results = json::object();
  json timings = json::object();

  void succeed() {
    write_envelope("ok", "");
    fs::remove(config_.out / "FAILED");
  }

  void fail(const std::string& message) {
    std::ofstream(config_.out / "FAILED") << message << '\n';
    write_envelope("failed", message);
  }

 private:
  void write_envelope(const std::string& status, const std::string& error) {
    json config = config_.params;
    config.erase("threads");
    config.erase("out");
    config.erase("command");
    json env = {{"command", config_.command},
                {"status", status},
                {"seed", config_.seed},
                {"config", config},
                {"versions", versions()},
                {"files", files_}};
    if (config_.json && status == "ok") env["results"] = results;
    if (!error.empty()) env["error"] = error;
    env["metadata"] = {{"started", started_},
                       {"finished", utc_now()},
                       {"threads", config_.threads},
                       {"out", config_.out.string()},
                       {"timings", timings}};
    std::ofstream f(config_.out / "result.json");
    f << env.dump(2) << '\n';
  }

  const RunConfig& config_;
  std::string started_;
  std::vector<std::string> files_;
};

// ---------------------------------------------------------------------------
// Result pieces shared by the DPM-based commands.

json dpm_summary(const dpm::DpmPosterior& post) {
  double kstar = 0.0, alpha = 0.0, lambda = 0.0;
  for (const auto& d : post.draws) {
    const auto counts = d.counts();
    kstar += static_cast<double>(std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }));
    alpha += d.alpha;
    lambda += d.lambda;
  }
  const double nd = static_cast<double>(post.draws.size());
  return {{"sampler", dpm::to_string(post.sampler)},
          {"draws", post.draws.size()},
          {"kstar_mean", kstar / nd},
          {"alpha_mean", alpha / nd},
          {"lambda_mean", lambda / nd},
          {"hyper", dpm::to_json(post.hyper)}};
}

void write_dpm_files(Output& out, const dpm::DpmPosterior& post, const Matrix& data) {
  if (!out.csv()) return;
  const dpm::RowMatrix rows = data;
  auto f = out.file("dpm_posterior.csv");
  dpm::write_posterior_csv(post, rows, f);
  if (post.diagnostics) {
    auto g = out.file("dpm_diagnostics.csv");
    dpm::write_diagnostics_csv(post, g);
  }
}

void strip_band(density::GridEvaluation& e) {
  e.lower.resize(0);
  e.upper.resize(0);
}

std::uint64_t evaluation_seed(std::uint64_t seed) { return stat::RngStream::substream(seed, {1}).next_u64(); }

// ---------------------------------------------------------------------------
// Commands. Each prepare function reads and checks everything it needs and
// returns the work as a closure; nothing is sampled before validation ends.

using Work = std::function<void(Output&)>;

struct Context {
  const RunConfig& config;
  Params top;
  std::optional<Table> input;
};

Work prepare_gen(Context& cx) {
  Params g = cx.top.block("gen");
  const auto example = g.get<std::string>("example", "qte");
  const auto n = g.get<std::int64_t>("n", 500);
  const auto p = g.get<std::int64_t>("p", 10);
  const auto sigma = g.get<double>("sigma", 1.0);
  g.finish();
  const std::set<std::string> known{"mix_data", "three_normals", "dunson", "qte", "null_effect"};
  if (!known.count(example))
    g.issue("example", "unknown example '" + example + "' (mix_data, three_normals, dunson, qte, null_effect)");
  if (n < 1) g.issue("n", "must be >= 1");
  if (example == "mix_data" && p < 10) g.issue("p", "mix_data needs p >= 10");
  if (example == "mix_data" && !(sigma > 0.0)) g.issue("sigma", "must be > 0");
  const std::uint64_t seed = cx.config.seed;

  return [=](Output& out) {
    stat::RngStream rng = stat::RngStream::substream(seed, {0});
    const auto nn = static_cast<std::size_t>(n);
    datagen::SyntheticDataset d;
    if (example == "mix_data") d = datagen::mix_data(nn, static_cast<std::size_t>(p), sigma, rng);
    else if (example == "three_normals") d = datagen::three_normals(nn, rng);
    else if (example == "dunson") d = datagen::dunson_example(nn, rng);
    else if (example == "qte") d = datagen::qte_example(nn, rng);
    else d = datagen::null_effect_example(nn, rng);

    std::vector<std::string> names;
    std::vector<const double*> cols;
    const std::string xname = example == "three_normals" ? "y" : "x";
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
      names.push_back(xname + std::to_string(j + 1));
      cols.push_back(d.x.col(j).data());
    }
    std::vector<double> t(d.treatment.begin(), d.treatment.end()), comp(d.component.begin(), d.component.end());
    if (!t.empty()) {
      names.push_back("t");
      cols.push_back(t.data());
    }
    if (d.y.size() > 0) {
      names.push_back("y");
      cols.push_back(d.y.data());
    }
    if (d.y0.size() > 0) {
      names.insert(names.end(), {"y0", "y1"});
      cols.insert(cols.end(), {d.y0.data(), d.y1.data()});
    }
    if (!comp.empty()) {
      names.push_back("component");
      cols.push_back(comp.data());
    }
    auto f = out.file("data.csv");
    for (std::size_t j = 0; j < names.size(); ++j) f << names[j] << (j + 1 < names.size() ? ',' : '\n');
    for (std::size_t i = 0; i < nn; ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) f << cols[j][i] << (j + 1 < cols.size() ? ',' : '\n');
    out.results = {{"example", example}, {"n", nn}, {"columns", names}, {"file", "data.csv"}};
  };
}

Work prepare_bart(Context& cx) {
  const Table& t = *cx.input;
  const auto cols = regression_columns(t, cx.top.block("columns"), false);
  Params b = cx.top.block("bart");
  const auto type = b.get<std::string>("type", "continuous");
  if (type != "continuous" && type != "probit") b.issue("type", "expected continuous or probit");
  const auto hyper = read_bart_hyper(b);
  const auto mcmc = read_mcmc(b, {100, 1000, 1});
  const auto xpred_path = b.maybe<std::string>("xpred");
  const bool save = b.get<bool>("save_posterior", false);
  const double level = b.get<double>("level", 0.95);
  b.finish();
  Issues& issues = cx.top.issues();
  if (!(level > 0.0 && level < 1.0)) b.issue("level", "must be in (0, 1)");
  if (cols.response < 0 || cols.confounders.empty()) return {};

  const Matrix x = t.columns(cols.confounders);
  const Vector y = t.values.col(cols.response);
  guard(issues, "bart", [&] { bart::validate(hyper, static_cast<std::size_t>(y.size())); });
  guard(issues, "columns", [&] { bart::CovariateSchema(x, cols.types); });
  if (type == "probit")
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] != 0.0 && y[i] != 1.0) {
        issues.push_back("columns.response: probit BART needs a 0/1 response (row " + std::to_string(i + 1) + ")");
        break;
      }
  std::optional<Matrix> xpred;
  if (xpred_path) xpred = read_xpred(*xpred_path, t, cols.confounders, b, "xpred");
  std::vector<std::string> names;
  for (int j : cols.confounders) names.push_back(t.names[static_cast<std::size_t>(j)]);
  const std::uint64_t seed = cx.config.seed;
  const int threads = cx.config.threads;

  return [=](Output& out) {
    stat::RngStream rng = stat::RngStream::substream(seed, {0});
    Stopwatch sw;
    bart::BartPosterior post;
    if (type == "probit") {
      std::vector<int> tr(static_cast<std::size_t>(y.size()));
      for (Eigen::Index i = 0; i < y.size(); ++i) tr[static_cast<std::size_t>(i)] = static_cast<int>(y[i]);
      post = bart::fit_probit_bart(x, cols.types, tr, hyper, mcmc, rng);
    } else {
      post = bart::fit_continuous_bart(x, cols.types, {y.data(), static_cast<std::size_t>(y.size())}, hyper, mcmc, rng);
    }
    out.timings["bart_fit"] = sw.seconds();

    auto fit_summary = [&](const Matrix& latent) {
      json j = {{"mean", column_vector(latent.colwise().mean().transpose(), 0)}};
      if (latent.rows() >= 20) {
        const auto [lo, hi] = density::credible_band(latent, level, density::BandKind::bci);
        j["lower"] = column_vector(lo, 0);
        j["upper"] = column_vector(hi, 0);
      }
      if (type == "probit") {
        const Matrix prob = latent.unaryExpr([](double v) { return stat::normal_cdf(v); });
        j["probability"] = column_vector(prob.colwise().mean().transpose(), 0);
      }
      return j;
    };
    auto write_fits = [&](const std::string& file, const json& s, const Vector* response) {
      auto f = out.file(file);
      f << "row" << (response ? ",y" : "") << ",fit_mean,lower,upper" << (type == "probit" ? ",probability" : "")
        << '\n';
      const auto& mean = s["mean"];
      for (std::size_t i = 0; i < mean.size(); ++i) {
        f << i + 1;
        if (response) f << ',' << (*response)[static_cast<Eigen::Index>(i)];
        f << ',' << mean[i].get<double>() << ',';
        if (s.contains("lower")) f << s["lower"][i].get<double>() << ',' << s["upper"][i].get<double>();
        else f << ',';
        if (type == "probit") f << ',' << s["probability"][i].get<double>();
        f << '\n';
      }
    };

    json res = {{"type", type}, {"n", y.size()}, {"draws", post.ndraws()}, {"variables", names}};
    const json train = fit_summary(post.train_fits);
    res["train"] = train;
    if (type == "continuous") {
      const Vector mean = post.train_fits.colwise().mean().transpose();
      res["rmse"] = std::sqrt((mean - y).squaredNorm() / static_cast<double>(y.size()));
      double s = 0.0;
      for (double v : post.sigma) s += v;
      res["sigma_mean"] = s / static_cast<double>(post.sigma.size());
    }
    const auto imp = bart::variable_importance(post);
    if (imp) {
      res["importance"] = {{"vip", column_vector(imp->vip, 0)},
                           {"within_type_vip", column_vector(imp->within_type_vip, 0)},
                           {"mi", column_vector(imp->mi, 0)}};
    } else {
      res["importance"] = nullptr;
    }
    if (out.csv()) {
      write_fits("bart_fit.csv", train, &y);
      if (imp) {
        auto f = out.file("bart_importance.csv");
        f << "variable,type,vip,within_type_vip,mi\n";
        for (std::size_t j = 0; j < names.size(); ++j) {
          const auto i = static_cast<Eigen::Index>(j);
          f << names[j] << ',' << (cols.types[j] == bart::VarType::categorical ? "categorical" : "continuous") << ','
            << imp->vip[i] << ',' << imp->within_type_vip[i] << ',' << imp->mi[i] << '\n';
        }
      }
      if (!post.sigma.empty()) {
        auto f = out.file("bart_sigma.csv");
        f << "draw,sigma\n";
        for (std::size_t d = 0; d < post.sigma.size(); ++d) f << d << ',' << post.sigma[d] << '\n';
      }
    }
    if (xpred) {
      Stopwatch ps;
      const auto pred = bart::predict(post, *xpred, threads);
      out.timings["predict"] = ps.seconds();
      const json s = fit_summary(pred.latent);
      res["predict"] = s;
      if (out.csv()) write_fits("bart_predict.csv", s, nullptr);
    }
    if (save) {
      auto f = out.file("bart_posterior.json");
      f << bart::to_json(post).dump() << '\n';
    }
    out.results = std::move(res);
  };
}

Work prepare_density(Context& cx) {
  const Table& t = *cx.input;
  const auto cols = variable_columns(t, cx.top.block("columns"));
  Params p = cx.top.block("density");
  const auto spec = read_dpm(p.block("dpm"), true, {});
  const auto axes = p.maybe<std::vector<std::vector<double>>>("axes");
  const auto points = p.get<std::int64_t>("points", 100);
  const auto band = read_band(p);
  const bool save_draws = p.get<bool>("save_draws", false);
  const bool diag = p.get<bool>("diagnostics", false);
  p.finish();
  Issues& issues = cx.top.issues();
  if (cols.variables.empty()) return {};

  const Matrix data = t.columns(cols.variables);
  const auto hyper = build_hyper(spec, data, issues, "density.dpm");
  density::GridSpec grid;
  if (axes) {
    grid = {*axes, false};
    if (axes->size() != cols.variables.size())
      p.issue("axes", std::to_string(axes->size()) + " axes for " + std::to_string(cols.variables.size()) +
                          " variables");
  } else if (points < 2) {
    p.issue("points", "must be >= 2");
  } else {
    grid = density::data_driven_grid(data, static_cast<std::size_t>(points));
  }
  guard(issues, "density.axes", [&] { density::validate(grid); });
  const double cells = static_cast<double>(grid.size()) * spec.mcmc.ndpost;
  if (cells > 2e8) p.issue("points", "grid points x kept draws is too large to hold (" + std::to_string(cells) + ")");
  if (band.compute && spec.mcmc.ndpost < 20) p.issue("compute_band", "bands need ndpost >= 20");
  const std::uint64_t seed = cx.config.seed;
  const int threads = cx.config.threads;

  return [=](Output& out) {
    stat::RngStream rng = stat::RngStream::substream(seed, {0});
    Stopwatch sw;
    const auto post = dpm::run_mcmc(data, hyper, spec.mcmc, spec.sampler, rng, diag);
    out.timings["dpm_fit"] = sw.seconds();
    Stopwatch ev;
    auto res = density::estimate_joint_density(post, grid, evaluation_seed(seed), threads, band.level, band.kind);
    if (!band.compute) strip_band(res.density);
    out.timings["evaluation"] = ev.seconds();
    json r = {{"dpm", dpm_summary(post)}, {"density", density::to_json(res)}};
    if (grid.dim() <= 2) r["integral"] = density::trapezoid(grid, res.density.average);
    if (out.csv()) {
      auto f = out.file("density_summary.csv");
      density::write_summary_csv(res, f);
      if (save_draws) {
        auto g = out.file("density_draws.csv");
        density::write_draws_csv(res, g);
      }
    }
    write_dpm_files(out, post, data);
    out.results = std::move(r);
  };
}

Work prepare_cdensity(Context& cx) {
  const Table& t = *cx.input;
  const auto cols = regression_columns(t, cx.top.block("columns"), false);
  Params p = cx.top.block("cdensity");
  const auto spec = read_dpm(p.block("dpm"), true, {});
  const auto xpred_path = p.maybe<std::string>("xpred");
  const auto xpred_values = p.maybe<std::vector<std::vector<double>>>("xpred_values");
  const auto ygrid = p.maybe<std::vector<double>>("ygrid");
  const auto points = p.get<std::int64_t>("points", 100);
  const auto type_pred = p.get<std::vector<std::string>>("type_pred", {"pdf", "cdf", "mean"});
  const auto band = read_band(p);
  const bool save_draws = p.get<bool>("save_draws", false);
  p.finish();
  Issues& issues = cx.top.issues();
  if (cols.response < 0 || cols.confounders.empty()) return {};

  Matrix data(t.values.rows(), static_cast<Eigen::Index>(cols.confounders.size() + 1));
  data.col(0) = t.values.col(cols.response);
  data.rightCols(data.cols() - 1) = t.columns(cols.confounders);
  const auto hyper = build_hyper(spec, data, issues, "cdensity.dpm");

  density::CurveRequest req;
  req.pdf = req.cdf = req.mean = false;
  for (const auto& k : type_pred) {
    if (k == "pdf") req.pdf = true;
    else if (k == "cdf") req.cdf = true;
    else if (k == "mean") req.mean = true;
    else p.issue("type_pred", "unknown entry '" + k + "' (pdf, cdf, mean)");
  }
  if (xpred_path && xpred_values) p.issue("xpred", "give xpred or xpred_values, not both");
  if (xpred_path) {
    if (auto m = read_xpred(*xpred_path, t, cols.confounders, p, "xpred")) req.xpred = *m;
  } else if (xpred_values) {
    const auto& rows = *xpred_values;
    req.xpred.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.confounders.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cols.confounders.size()) {
        p.issue("xpred_values", "row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                                    " values, expected " + std::to_string(cols.confounders.size()));
        break;
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        req.xpred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  } else {
    p.issue("xpred", "required (a CSV path, or xpred_values inline)");
  }
  if (ygrid) {
    req.ygrid = *ygrid;
  } else if (points >= 2) {
    const Vector y = data.col(0);
    req.ygrid = density::data_driven_axis({y.data(), static_cast<std::size_t>(y.size())}, static_cast<std::size_t>(points));
  } else {
    p.issue("points", "must be >= 2");
  }
  if (req.xpred.rows() > 0) guard(issues, "cdensity", [&] { density::validate(req, static_cast<std::size_t>(data.cols())); });
  if (band.compute && spec.mcmc.ndpost < 20) p.issue("compute_band", "bands need ndpost >= 20");
  density::PolyaCurveOptions opt;
  opt.epsilon = spec.epsilon;
  opt.max_sticks = spec.max_sticks;
  opt.cache = spec.cache;
  const std::uint64_t seed = cx.config.seed;
  const int threads = cx.config.threads;

  return [=](Output& out) {
    stat::RngStream rng = stat::RngStream::substream(seed, {0});
    Stopwatch sw;
    const auto post = dpm::run_mcmc(data, hyper, spec.mcmc, spec.sampler, rng);
    out.timings["dpm_fit"] = sw.seconds();
    Stopwatch ev;
    auto res = density::estimate_conditional(post, req, evaluation_seed(seed), threads, opt, band.level, band.kind);
    if (!band.compute)
      for (auto& c : res.curves) strip_band(c);
    out.timings["evaluation"] = ev.seconds();
    if (out.csv()) {
      auto f = out.file("cdensity_summary.csv");
      density::write_summary_csv(res, f);
      if (save_draws) {
        auto g = out.file("cdensity_draws.csv");
        density::write_draws_csv(res, g);
      }
    }
    write_dpm_files(out, post, data);
    out.results = {{"dpm", dpm_summary(post)}, {"conditional", density::to_json(res)}};
  };
}

Work prepare_qte(Context& cx) {
  const Table& t = *cx.input;
  const auto cols = regression_columns(t, cx.top.block("columns"), true);
  Params p = cx.top.block("qte");
  qte::QteConfig c;
  c.probs = p.get<std::vector<double>>("probs", c.probs);
  guard(cx.top.issues(), p.name("Rdist"), [&] { c.rdist = qte::parse_rdist(p.get<std::string>("Rdist", "bootstrap")); });
  const auto xpred_path = p.maybe<std::string>("xpred");
  const auto ngrid = p.get<std::int64_t>("ngrid", 100);
  if (ngrid < 2) p.issue("ngrid", "must be >= 2");
  c.ngrid = static_cast<std::size_t>(std::max<std::int64_t>(ngrid, 2));
  if (auto g = p.maybe<std::vector<double>>("grid")) c.grid = *g;
  c.pdf = p.get<bool>("pdf", true);
  guard(cx.top.issues(), p.name("type_band"), [&] { c.band = density::parse_band(p.get<std::string>("type_band", "hpd")); });
  c.alphas = p.get<std::vector<double>>("alphas", c.alphas);
  if (c.alphas.empty()) p.issue("alphas", "must not be empty");
  const bool save_draws = p.get<bool>("save_draws", true);
  {
    Params b = p.block("bart");
    c.bart_hyper = read_bart_hyper(b);
    c.bart_mcmc = read_mcmc(b, c.bart_mcmc);
    b.finish();
  }
  const auto spec = read_dpm(p.block("dpm"), false, c.dpm_mcmc);
  c.sampler = spec.sampler;
  c.update_alpha = spec.update_alpha;
  c.hyperpriors = spec.hyperpriors;
  c.nclusters = spec.nclusters;
  c.dpm_mcmc = spec.mcmc;
  c.epsilon = spec.epsilon;
  c.threads = cx.config.threads;
  p.finish();
  Issues& issues = cx.top.issues();
  if (xpred_path) {
    if (auto m = read_xpred(*xpred_path, t, cols.confounders, p, "xpred")) c.xpred = *m;
  }
  for (auto& s : qte::check(c, cols.confounders.size()))
    if (!(xpred_path && s.find("xpred") != std::string::npos)) issues.push_back("qte: " + s);
  if (cols.response < 0 || cols.treatment < 0 || cols.confounders.empty()) return {};
  const Matrix x = t.columns(cols.confounders);
  const Vector y = t.values.col(cols.response);
  guard(issues, "qte.bart", [&] { bart::validate(c.bart_hyper, static_cast<std::size_t>(y.size())); });
  guard(issues, "columns", [&] { bart::CovariateSchema(x, cols.types); });
  std::vector<int> treatment(static_cast<std::size_t>(y.size()));
  std::size_t n1 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = t.values(i, cols.treatment);
    if (v != 0.0 && v != 1.0) {
      issues.push_back("columns.treatment: values must be 0 or 1 (row " + std::to_string(i + 1) + ")");
      break;
    }
    treatment[static_cast<std::size_t>(i)] = static_cast<int>(v);
    n1 += static_cast<std::size_t>(v);
  }
  const auto n = static_cast<std::size_t>(y.size());
  if (n1 < 3 || n - n1 < 3) issues.emplace_back("columns.treatment: each arm needs at least 3 observations");
  const std::uint64_t seed = cx.config.seed;

  return [=](Output& out) {
    const auto r = qte::estimate_qte({y.data(), n}, x, cols.types, treatment, c, seed);
    out.timings["bart_fit"] = r.seconds_bart;
    out.timings["dpm_fits_and_evaluation"] = r.seconds_dpm;
    out.timings["dpm_jobs"] = r.seconds_jobs;
    if (out.csv()) {
      auto f = out.file("qte_summary.csv");
      qte::write_summary_csv(r, f);
      auto g = out.file("qte_curves.csv");
      qte::write_curves_csv(r, g);
      if (save_draws) {
        auto h = out.file("qte_draws.csv");
        qte::write_draws_csv(r, h);
      }
    }
    json res = qte::to_json(r);
    res["rdist"] = qte::to_string(c.rdist);
    res["sampler"] = dpm::to_string(c.sampler);
    out.results = std::move(res);
  };
}

Work prepare_diag(Context& cx) {
  const Table& t = *cx.input;
  const auto cols = variable_columns(t, cx.top.block("columns"));
  Params p = cx.top.block("diag");
  const auto spec = read_dpm(p.block("dpm"), true, {});
  const auto max_lag = p.get<std::int64_t>("max_lag", 50);
  p.finish();
  if (max_lag < 1) p.issue("max_lag", "must be >= 1");
  else if (max_lag >= spec.mcmc.ndpost) p.issue("max_lag", "must be below ndpost");
  if (cols.variables.empty()) return {};
  const Matrix data = t.columns(cols.variables);
  const auto hyper = build_hyper(spec, data, cx.top.issues(), "diag.dpm");
  const std::uint64_t seed = cx.config.seed;

  return [=](Output& out) {
    stat::RngStream rng = stat::RngStream::substream(seed, {0});
    Stopwatch sw;
    const auto post = dpm::run_mcmc(data, hyper, spec.mcmc, spec.sampler, rng, true);
    out.timings["dpm_fit"] = sw.seconds();
    const auto& s = *post.diagnostics;
    std::vector<std::pair<std::string, std::vector<double>>> series{
        {"loglik", s.loglik}, {"alpha", s.alpha}, {"lambda", s.lambda}};
    if (!s.log_partition.empty()) series.emplace_back("logmpp", s.log_partition);
    std::vector<double> occupied(s.occupied.begin(), s.occupied.end());
    series.emplace_back("occupied", occupied);

    json acf = json::object();
    json means = json::object();
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (const auto& [name, v] : series) {
      auto a = diagnostics::autocorrelation(v, static_cast<std::size_t>(max_lag));
      acf[name] = a;
      double m = 0.0;
      for (double e : v) m += e;
      means[name] = m / static_cast<double>(v.size());
      curves.emplace_back(name, std::move(a));
    }
    if (out.csv()) {
      auto f = out.file("diag_acf.csv");
      f << "series,lag,acf\n";
      for (const auto& [name, a] : curves)
        for (std::size_t l = 0; l < a.size(); ++l) f << name << ',' << l << ',' << a[l] << '\n';
    }
    write_dpm_files(out, post, data);
    out.results = {{"dpm", dpm_summary(post)}, {"acf", acf}, {"means", means}};
  };
}

Work prepare(const RunConfig& config, Issues& issues) {
  Context cx{config, Params(&config.params, "", &issues), std::nullopt};
  cx.top.mark({"command", "seed", "threads", "out", "formats"});
  const auto input = cx.top.maybe<std::string>("input");
  Work work;
  if (config.command == "gen") {
    work = prepare_gen(cx);
    cx.top.mark({"columns"});
  } else {
    if (!input) {
      issues.emplace_back("input: required (CSV path)");
    } else {
      guard(issues, "input", [&] { cx.input = read_csv(*input); });
    }
    if (cx.input) {
      if (config.command == "bart") work = prepare_bart(cx);
      else if (config.command == "density") work = prepare_density(cx);
      else if (config.command == "cdensity") work = prepare_cdensity(cx);
      else if (config.command == "qte") work = prepare_qte(cx);
      else if (config.command == "diag") work = prepare_diag(cx);
    }
    cx.top.mark({"columns", "bart", "density", "cdensity", "qte", "diag", "gen"});
  }
  // Blocks of the other commands are tolerated so one file can drive several.
  for (const auto& c : kCommands) cx.top.mark({c.c_str()});
  cx.top.finish();
  return work;
}

}  // namespace

RunConfig make_config(std::string command, json params, Issues& issues) {
  RunConfig c;
  if (!params.is_object()) {
    issues.emplace_back("config: top level must be a JSON object");
    params = json::object();
  }
  if (params.contains("command")) {
    if (!params["command"].is_string()) {
      issues.emplace_back("command: expected a string");
    } else if (command.empty()) {
      command = params["command"].get<std::string>();
    } else if (params["command"].get<std::string>() != command) {
      issues.push_back("command: config says '" + params["command"].get<std::string>() + "', command line says '" +
                       command + "'");
    }
  }
  if (!kCommands.count(command)) issues.push_back("command: unknown '" + command + "'");
  c.command = command;
  Params top(&params, "", &issues);
  c.seed = top.get<std::uint64_t>("seed", 1);
  const auto threads = top.get<std::int64_t>("threads", 1);
  if (threads < 1 || threads > 1024) issues.emplace_back("threads: must be in [1, 1024]");
  c.threads = static_cast<int>(std::clamp<std::int64_t>(threads, 1, 1024));
  c.out = top.get<std::string>("out", "out");
  const auto formats = top.get<std::vector<std::string>>("formats", {"json", "csv"});
  c.json = c.csv = false;
  for (const auto& f : formats) {
    if (f == "json") c.json = true;
    else if (f == "csv") c.csv = true;
    else issues.push_back("formats: unknown format '" + f + "' (json, csv)");
  }
  c.params = std::move(params);
  return c;
}

std::vector<std::string> validate(const RunConfig& config) {
  Issues issues;
  if (!kCommands.count(config.command)) {
    issues.push_back("command: unknown '" + config.command + "'");
    return issues;
  }
  prepare(config, issues);
  return issues;
}

int run(const RunConfig& config) {
  Issues issues;
  Work work;
  if (!kCommands.count(config.command)) issues.push_back("command: unknown '" + config.command + "'");
  else work = prepare(config, issues);
  if (!issues.empty() || !work) {
    std::cerr << "validation failed (" << issues.size() << " problem" << (issues.size() == 1 ? "" : "s") << "):\n";
    for (const auto& s : issues) std::cerr << "  - " << s << '\n';
    return kExitValidation;
  }

  std::optional<Output> out;
  try {
    out.emplace(config);
  } catch (const std::exception& e) {
    std::cerr << "cannot prepare output directory " << config.out << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  Stopwatch total;
  try {
    work(*out);
    out->timings["total"] = total.seconds();
    out->succeed();
  } catch (const std::exception& e) {
    const std::string msg = config.command + ": " + e.what();
    std::cerr << "error: " << msg << '\n';
    out->timings["total"] = total.seconds();
    out->fail(msg);
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dpmqte::cli
