#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpmqte/dpm/dpm.hpp"

namespace dpmqte::density {

/// Cartesian grid, one strictly increasing axis per coordinate. Points are
/// enumerated with the last axis varying fastest.
struct GridSpec {
  std::vector<std::vector<double>> axes;
  bool data_driven = false;

  std::size_t dim() const { return axes.size(); }
  std::size_t size() const;
  /// Coordinates of point `index` written to `out` (length dim()).
  void point(std::size_t index, double* out) const;
};

void validate(const GridSpec& grid);

/// `points` equispaced values over [min - 0.25·range, max + 0.25·range].
std::vector<double> data_driven_axis(std::span<const double> values, std::size_t points = 100);
GridSpec data_driven_grid(const Matrix& data, std::size_t points = 100);

/// Σ_k ω_k N(z | ζ_k, Ω_k) at every grid point.
Vector joint_density_blocked(const dpm::DpmDraw& draw, const GridSpec& grid);

/// Pólya-urn predictive: α/(α+n)·N(z | ζ*, Ω*) + Σ_k n_k/(α+n)·N(z | ζ_k, Ω_k),
/// with one (ζ*, Ω*) drawn from the draw's base measure.
Vector joint_density_polya(const dpm::DpmDraw& draw, const GridSpec& grid, double nu,
                           stat::RngStream& rng);

/// Regression form of one normal cluster with the response as coordinate 0:
/// y | x ~ N(β0 + xᵀβ, σ²), x ~ N(ζ₂, Ω₂₂).
struct ComponentRegression {
  double beta0 = 0.0;
  Vector beta;
  double sigma = 1.0;
  stat::Gaussian x_marginal;

  double location(const double* x) const;
};

ComponentRegression component_regression(const Vector& zeta, const Matrix& omega);

struct ConditionalComponents {
  std::vector<ComponentRegression> clusters;
  /// log ω_k for blocked draws, log n_k for Pólya-urn draws.
  std::vector<double> log_weight;
};

ConditionalComponents conditional_components(const dpm::DpmDraw& draw, dpm::Sampler sampler);

struct CurveRequest {
  Matrix xpred;               // rows are covariate points, d-1 columns
  std::vector<double> ygrid;  // strictly increasing
  bool pdf = true;
  bool cdf = true;
  bool mean = true;
};

void validate(const CurveRequest& req, std::size_t dim);

/// Curves of one draw: pdf/cdf are xpred-rows × ygrid, mean has one entry per xpred row.
struct DrawCurves {
  Matrix pdf;
  Matrix cdf;
  Vector mean;
  std::vector<std::size_t> sticks;  // Pólya-urn path: sticks used per xpred row
  std::vector<double> stick_mass;   // Pólya-urn path: Σ ω_j per xpred row
};

/// x-dependent mixture: ω_k(x) ∝ ω_k N(x | ζ₂k, Ω₂₂k), normalized in log space.
DrawCurves conditional_curves_blocked(const dpm::DpmDraw& draw, const CurveRequest& req);

struct PolyaCurveOptions {
  double epsilon = 0.01;
  std::size_t max_sticks = 100000;
  /// Per-cluster marginal and conditional densities evaluated once per x and
  /// reused for every stick. Turning this off gives the reference path, which
  /// evaluates them per stick and returns bit-identical output.
  bool cache = true;
};

/// ε-truncated stick-breaking estimate built from a Pólya-urn draw. Sticks and
/// base-measure draws are made afresh for every xpred row.
DrawCurves conditional_curves_polya(const dpm::DpmDraw& draw, const CurveRequest& req, double nu,
                                    const PolyaCurveOptions& opt, stat::RngStream& rng);

enum class BandKind { hpd, bci };
BandKind parse_band(const std::string& name);
std::string to_string(BandKind kind);

/// Pointwise band over the columns of `values` (draws × points).
std::pair<Vector, Vector> credible_band(const Matrix& values, double level, BandKind kind);

/// Column means by pairwise summation.
Vector pairwise_column_mean(const Matrix& values);

struct GridEvaluation {
  std::string kind;  // pdf, cdf or mean
  Matrix draws;      // draws × points
  Vector average;
  Vector lower;
  Vector upper;
};

GridEvaluation summarize(std::string kind, Matrix draws, double level, BandKind band);

struct JointDensityResult {
  GridSpec grid;
  GridEvaluation density;
};

/// Joint density over all kept draws. Pólya-urn draws use substream (seed, draw).
JointDensityResult estimate_joint_density(const dpm::DpmPosterior& post, const GridSpec& grid,
                                          std::uint64_t seed, int threads, double level = 0.95,
                                          BandKind band = BandKind::hpd);

struct ConditionalResult {
  CurveRequest request;
  std::vector<GridEvaluation> curves;  // in the order pdf, cdf, mean (requested ones only)
};

ConditionalResult estimate_conditional(const dpm::DpmPosterior& post, const CurveRequest& req,
                                       std::uint64_t seed, int threads,
                                       const PolyaCurveOptions& opt = {}, double level = 0.95,
                                       BandKind band = BandKind::hpd);

/// Trapezoid integral of grid values over a 1-d or 2-d grid.
double trapezoid(const GridSpec& grid, const Vector& values);

}  // namespace dpmqte::density
