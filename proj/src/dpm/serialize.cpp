#include "dpmqte/dpm/serialize.hpp"

#include <iomanip>

#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/error.hpp"

namespace dpmqte::dpm {

using nlohmann::json;

namespace {

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

Vector to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix to_mat(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix();
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols)
      throw InvalidArgument("matrix rows have different lengths");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

void put_row(std::ostream& out, const Vector& v) {
  for (double x : v) out << ',' << x;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
}

void header(std::ostream& out, std::size_t d) {
  for (std::size_t i = 1; i <= d; ++i) out << ",m_" << i;
  for (std::size_t i = 1; i <= d; ++i)
    for (std::size_t j = 1; j <= d; ++j) out << ",psi_" << i << j;
}

}  // namespace

json to_json(const DpmHyper& h) {
  json j = {{"update_alpha", h.update_alpha}, {"hyperpriors", h.hyperpriors}, {"nu", h.nu},
            {"nclusters", h.nclusters}};
  if (h.update_alpha) {
    j["a0"] = h.a0;
    j["b0"] = h.b0;
  } else {
    j["alpha"] = h.alpha;
  }
  if (h.hyperpriors) {
    j["m0"] = vec(h.m0);
    j["S0"] = mat(h.S0);
    j["gamma1"] = h.gamma1;
    j["gamma2"] = h.gamma2;
    j["nu0"] = h.nu0;
    j["Psi0"] = mat(h.psi0);
  } else {
    j["m"] = vec(h.m);
    j["lambda"] = h.lambda;
    j["Psi"] = mat(h.psi);
  }
  return j;
}

DpmHyper hyper_from_json(const json& j) {
  DpmHyper h;
  h.update_alpha = j.value("update_alpha", true);
  h.hyperpriors = j.value("hyperpriors", true);
  h.nu = j.at("nu").get<double>();
  h.nclusters = j.value("nclusters", 50);
  if (h.update_alpha) {
    h.a0 = j.at("a0").get<double>();
    h.b0 = j.at("b0").get<double>();
  } else {
    h.alpha = j.at("alpha").get<double>();
  }
  if (h.hyperpriors) {
    h.m0 = to_vec(j.at("m0"));
    h.S0 = to_mat(j.at("S0"));
    h.gamma1 = j.at("gamma1").get<double>();
    h.gamma2 = j.at("gamma2").get<double>();
    h.nu0 = j.at("nu0").get<double>();
    h.psi0 = to_mat(j.at("Psi0"));
  } else {
    h.m = to_vec(j.at("m"));
    h.lambda = j.at("lambda").get<double>();
    h.psi = to_mat(j.at("Psi"));
  }
  return h;
}

json to_json(const DpmState& s) {
  json clusters = json::array();
  for (const auto& g : s.clusters) clusters.push_back({{"zeta", vec(g.mean())}, {"Omega", mat(g.cov())}});
  json j = {{"sampler", to_string(s.sampler)}, {"kappa", s.kappa}, {"clusters", clusters},
            {"alpha", s.alpha}, {"m", vec(s.m)}, {"lambda", s.lambda}, {"Psi", mat(s.psi)}};
  if (s.sampler == Sampler::blocked) {
    j["log_weights"] = vec(s.log_weights);
    j["log1m_sticks"] = vec(s.log1m_sticks);
    j["sticks"] = vec(s.sticks);
  }
  return j;
}

DpmState state_from_json(const json& j) {
  DpmState s;
  s.sampler = parse_sampler(j.at("sampler").get<std::string>());
  s.kappa = j.at("kappa").get<std::vector<int>>();
  for (const auto& c : j.at("clusters")) s.clusters.emplace_back(to_vec(c.at("zeta")), to_mat(c.at("Omega")));
  for (int k : s.kappa)
    if (k < 0 || static_cast<std::size_t>(k) >= s.clusters.size())
      throw InvalidArgument("state snapshot: allocation refers to a missing cluster");
  s.alpha = j.at("alpha").get<double>();
  s.m = to_vec(j.at("m"));
  s.lambda = j.at("lambda").get<double>();
  s.psi = to_mat(j.at("Psi"));
  if (s.sampler == Sampler::blocked) {
    s.log_weights = to_vec(j.at("log_weights"));
    s.weights = s.log_weights.array().exp();
    s.log1m_sticks = to_vec(j.at("log1m_sticks"));
    s.sticks = to_vec(j.at("sticks"));
  }
  return s;
}

void write_posterior_csv(const DpmPosterior& post, const RowMatrix& data, std::ostream& out) {
  const std::size_t d = post.hyper.dim();
  out << std::setprecision(17) << "draw,alpha,lambda";
  header(out, d);
  out << ",kstar,loglik\n";
  for (std::size_t l = 0; l < post.draws.size(); ++l) {
    const auto& dr = post.draws[l];
    std::size_t kstar = 0;
    for (int c : dr.counts()) kstar += c > 0;
    out << l << ',' << dr.alpha << ',' << dr.lambda;
    put_row(out, dr.m);
    put_matrix(out, dr.psi);
    out << ',' << kstar << ',' << diagnostics::log_likelihood(dr, data) << '\n';
  }
}

void write_diagnostics_csv(const DpmPosterior& post, std::ostream& out) {
  if (!post.diagnostics) throw InvalidArgument("posterior was run without diagnostics");
  const auto& ds = *post.diagnostics;
  out << std::setprecision(17) << "draw,loglik,logmpp,alpha,lambda";
  header(out, post.hyper.dim());
  out << '\n';
  for (std::size_t l = 0; l < ds.loglik.size(); ++l) {
    out << l << ',' << ds.loglik[l] << ',';
    if (l < ds.log_partition.size()) out << ds.log_partition[l];
    out << ',' << ds.alpha[l] << ',' << ds.lambda[l];
    put_row(out, ds.m[l]);
    put_matrix(out, ds.psi[l]);
    out << '\n';
  }
}

}  // namespace dpmqte::dpm
