#include "dpmqte/density/export.hpp"

#include <iomanip>

namespace dpmqte::density {

using nlohmann::json;

namespace {

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json summary(const GridEvaluation& e) {
  json j = {{"kind", e.kind}, {"draws", e.draws.rows()}, {"avg", vec(e.average)}};
  if (e.lower.size() > 0) {
    j["lower"] = vec(e.lower);
    j["upper"] = vec(e.upper);
  }
  return j;
}

void band_cells(std::ostream& out, const GridEvaluation& e, Eigen::Index p) {
  out << ',' << e.average[p];
  if (e.lower.size() > 0)
    out << ',' << e.lower[p] << ',' << e.upper[p];
  else
    out << ",,";
  out << '\n';
}

std::vector<double> column(const Matrix& m, Eigen::Index c) {
  return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

}  // namespace

void write_summary_csv(const JointDensityResult& r, std::ostream& out) {
  const std::size_t d = r.grid.dim();
  out << std::setprecision(17);
  for (std::size_t a = 0; a < d; ++a) out << "i" << a + 1 << ',';
  for (std::size_t a = 0; a < d; ++a) out << "y" << a + 1 << ',';
  out << "avg,lower,upper\n";
  std::vector<double> p(d);
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    std::size_t rest = i;
    std::vector<std::size_t> idx(d);
    for (std::size_t a = d; a-- > 0;) {
      idx[a] = rest % r.grid.axes[a].size();
      rest /= r.grid.axes[a].size();
    }
    r.grid.point(i, p.data());
    for (auto v : idx) out << v << ',';
    for (std::size_t a = 0; a < d; ++a) out << p[a] << (a + 1 < d ? "," : "");
    band_cells(out, r.density, static_cast<Eigen::Index>(i));
  }
}

void write_summary_csv(const ConditionalResult& r, std::ostream& out) {
  const auto& req = r.request;
  const auto ny = static_cast<Eigen::Index>(req.ygrid.size());
  out << std::setprecision(17) << "kind,x_index,y_index";
  for (Eigen::Index c = 0; c < req.xpred.cols(); ++c) out << ",x" << c + 1;
  out << ",y,avg,lower,upper\n";
  for (const auto& e : r.curves) {
    const bool curve = e.kind != "mean";
    for (Eigen::Index i = 0; i < req.xpred.rows(); ++i) {
      for (Eigen::Index s = 0; s < (curve ? ny : 1); ++s) {
        out << e.kind << ',' << i << ',';
        if (curve) out << s;
        for (Eigen::Index c = 0; c < req.xpred.cols(); ++c) out << ',' << req.xpred(i, c);
        out << ',';
        if (curve) out << req.ygrid[static_cast<std::size_t>(s)];
        band_cells(out, e, curve ? i * ny + s : i);
      }
    }
  }
}

void write_draws_csv(const JointDensityResult& r, std::ostream& out) {
  out << std::setprecision(17) << "draw,point,value\n";
  const auto& m = r.density.draws;
  for (Eigen::Index l = 0; l < m.rows(); ++l)
    for (Eigen::Index p = 0; p < m.cols(); ++p) out << l << ',' << p << ',' << m(l, p) << '\n';
}

void write_draws_csv(const ConditionalResult& r, std::ostream& out) {
  const auto ny = static_cast<Eigen::Index>(r.request.ygrid.size());
  out << std::setprecision(17) << "kind,draw,x_index,y_index,value\n";
  for (const auto& e : r.curves) {
    const bool curve = e.kind != "mean";
    for (Eigen::Index l = 0; l < e.draws.rows(); ++l)
      for (Eigen::Index p = 0; p < e.draws.cols(); ++p) {
        out << e.kind << ',' << l << ',' << (curve ? p / ny : p) << ',';
        if (curve) out << p % ny;
        out << ',' << e.draws(l, p) << '\n';
      }
  }
}

json to_json(const JointDensityResult& r) {
  json axes = json::array();
  for (const auto& a : r.grid.axes) axes.push_back(a);
  return {{"grid", {{"axes", axes}, {"data_driven", r.grid.data_driven}}},
          {"density", summary(r.density)}};
}

json to_json(const ConditionalResult& r) {
  json xpred = json::array();
  for (Eigen::Index c = 0; c < r.request.xpred.cols(); ++c) xpred.push_back(column(r.request.xpred, c));
  json curves = json::object();
  for (const auto& e : r.curves) curves[e.kind] = summary(e);
  return {{"xpred", xpred}, {"ygrid", r.request.ygrid}, {"curves", curves}};
}

}  // namespace dpmqte::density
