#include "dpmqte/qte/export.hpp"

#include <iomanip>

namespace dpmqte::qte {

using nlohmann::json;

namespace {

std::vector<double> vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json curve(const density::GridEvaluation& e) {
  json j = {{"draws", e.draws.rows()}, {"avg", vec(e.average)}};
  if (e.lower.size() > 0) {
    j["lower"] = vec(e.lower);
    j["upper"] = vec(e.upper);
  }
  return j;
}

json arm(const ArmSummary& a) {
  json j = {{"quantiles", vec(a.quantile_avg)}, {"cdf", curve(a.cdf)}};
  if (a.pdf) j["pdf"] = curve(*a.pdf);
  return j;
}

void curve_rows(std::ostream& out, const std::vector<double>& grid, const char* name, const char* kind,
                const density::GridEvaluation& e) {
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    out << name << ',' << kind << ',' << s << ',' << grid[s] << ',' << e.average[i] << ',';
    if (e.lower.size() > 0) out << e.lower[i] << ',' << e.upper[i];
    else out << ',';
    out << '\n';
  }
}

}  // namespace

json to_json(const QteResult& r) {
  json ci = json::array();
  for (std::size_t a = 0; a < r.alphas.size(); ++a) {
    json rows = json::array();
    for (Eigen::Index j = 0; j < r.qte_ci[a].rows(); ++j) rows.push_back({r.qte_ci[a](j, 0), r.qte_ci[a](j, 1)});
    ci.push_back({{"alpha", r.alphas[a]}, {"bounds", rows}});
  }
  return {{"probs", r.probs},
          {"grid", r.grid},
          {"band", density::to_string(r.band)},
          {"draws", r.qte_draws.rows()},
          {"qtes", {{"avg", vec(r.qte_avg)}, {"ci", ci}}},
          {"control", arm(r.control)},
          {"treated", arm(r.treated)}};
}

void write_summary_csv(const QteResult& r, std::ostream& out) {
  out << std::setprecision(17) << "quantity,prob,alpha,avg,lower,upper\n";
  for (std::size_t j = 0; j < r.probs.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    out << "control," << r.probs[j] << ",," << r.control.quantile_avg[i] << ",,\n";
    out << "treated," << r.probs[j] << ",," << r.treated.quantile_avg[i] << ",,\n";
    for (std::size_t a = 0; a < r.alphas.size(); ++a)
      out << "qte," << r.probs[j] << ',' << r.alphas[a] << ',' << r.qte_avg[i] << ',' << r.qte_ci[a](i, 0) << ','
          << r.qte_ci[a](i, 1) << '\n';
  }
}

void write_curves_csv(const QteResult& r, std::ostream& out) {
  out << std::setprecision(17) << "arm,kind,s,y,avg,lower,upper\n";
  curve_rows(out, r.grid, "control", "cdf", r.control.cdf);
  curve_rows(out, r.grid, "treated", "cdf", r.treated.cdf);
  if (r.control.pdf) curve_rows(out, r.grid, "control", "pdf", *r.control.pdf);
  if (r.treated.pdf) curve_rows(out, r.grid, "treated", "pdf", *r.treated.pdf);
}

void write_draws_csv(const QteResult& r, std::ostream& out) {
  out << std::setprecision(17) << "draw,prob,control,treated,qte\n";
  for (Eigen::Index d = 0; d < r.qte_draws.rows(); ++d)
    for (std::size_t j = 0; j < r.probs.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      out << d << ',' << r.probs[j] << ',' << r.control.quantile_draws(d, i) << ','
          << r.treated.quantile_draws(d, i) << ',' << r.qte_draws(d, i) << '\n';
    }
}

}  // namespace dpmqte::qte
