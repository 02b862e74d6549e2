#pragma once

// Error metrics, Wasserstein estimators, the second-moment slope and the
// a posteriori error estimate built on the H_alpha metric.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deepspoc/error.hpp"
#include "deepspoc/measure_view.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/sde_engine.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

/// Batch density: fills out(i) for every row of x.
using BatchDensity = std::function<void(const Matrix& x, Vector& out)>;
/// Pointwise reference function.
using PointFunction = std::function<double(const double* x)>;

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct MetricReport {
  std::size_t epoch = 0;
  double relative_l2 = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> w1;
  std::optional<double> second_moment_slope;
  std::optional<double> posterior_h_alpha;
  std::optional<double> posterior_bound;
};

/// sqrt(sum (c0 rho - U)^2) / sqrt(sum U^2) over n uniform points of the box.
inline Estimate relative_l2(const BatchDensity& model, const PointFunction& reference, const Box& box,
                            std::size_t n, double scale, std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("relative_l2 needs at least one evaluation point");
  CounterRng rng(seed, 0, Lane::diagnostics, 0, 0);
  const Matrix x = uniform_points(n, box, rng);
  Vector rho;
  model(x, rho);
  Vector a(x.rows()), b(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double u = reference(x.row(i).data());
    const double e = scale * rho(i) - u;
    a(i) = e * e;
    b(i) = u * u;
  }
  const double ma = a.mean(), mb = b.mean();
  if (!(mb > 0.0)) throw NumericError("relative_l2: reference vanishes on every evaluation point");
  const double r = std::sqrt(ma / mb);
  // Delta-method standard error of sqrt(mean a / mean b).
  const double nn = static_cast<double>(n);
  const double va = (a.array() - ma).square().sum() / std::max(1.0, nn - 1.0);
  const double vb = (b.array() - mb).square().sum() / std::max(1.0, nn - 1.0);
  const double cab = ((a.array() - ma) * (b.array() - mb)).sum() / std::max(1.0, nn - 1.0);
  const double vratio = (va / (mb * mb) - 2.0 * ma * cab / (mb * mb * mb) + ma * ma * vb / (mb * mb * mb * mb)) / nn;
  Estimate out;
  out.value = r;
  out.std_error = r > 0.0 ? std::sqrt(std::max(vratio, 0.0)) / (2.0 * r) : 0.0;
  return out;
}

inline BatchDensity view_density(const MeasureView& view, double t) {
  return [&view, t](const Matrix& x, Vector& out) { view.density(t, x, out); };
}

/// Exact W_p between two empirical measures on the line, computed from the
/// quantile functions (equal counts reduce to the sorted-sample coupling).
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b, int p = 1) {
  if (a.empty() || b.empty()) throw EmptyBatchError("wasserstein_1d needs nonempty samples");
  if (p != 1 && p != 2) throw InvalidParameter("wasserstein_1d supports p = 1 or p = 2");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double acc = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[i]), p);
    acc /= na;
  } else {
    std::size_t i = 0, j = 0;
    double u = 0.0;
    while (i < a.size() && j < b.size()) {
      const double ua = static_cast<double>(i + 1) / na;
      const double ub = static_cast<double>(j + 1) / nb;
      const double next = std::min(ua, ub);
      acc += (next - u) * std::pow(std::abs(a[i] - b[j]), p);
      u = next;
      if (ua <= next) ++i;
      if (ub <= next) ++j;
    }
  }
  return p == 1 ? acc : std::sqrt(acc);
}

inline std::vector<double> column(const Matrix& x, Eigen::Index c = 0) {
  std::vector<double> v(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) v[static_cast<std::size_t>(i)] = x(i, c);
  return v;
}

/// Sliced W2: directions come in random orthonormal frames and the result is
/// the root-mean over frames of the summed 1D W2^2 along the frame axes. This
/// is exact for translations but remains an estimator of W2 in general.
/// The direction count is rounded up to a whole number of frames.
inline double sliced_w2(const Matrix& a, const Matrix& b, std::size_t directions, std::uint64_t seed) {
  if (a.rows() == 0 || b.rows() == 0) throw EmptyBatchError("sliced_w2 needs nonempty clouds");
  if (directions == 0) throw InvalidParameter("sliced_w2 needs at least one direction");
  if (a.cols() != b.cols()) throw DimensionError("sliced_w2: clouds live in different dimensions");
  const Eigen::Index d = a.cols();
  const std::size_t frames = (directions + static_cast<std::size_t>(d) - 1) / static_cast<std::size_t>(d);
  double acc = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    CounterRng rng(seed, 0, Lane::diagnostics, 1, f);
    Matrix g(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) g(r, c) = rng.normal();
    }
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    for (Eigen::Index c = 0; c < d; ++c) {
      const Vector pa = a * q.col(c), pb = b * q.col(c);
      const double w = wasserstein_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
                                      std::vector<double>(pb.data(), pb.data() + pb.size()), 2);
      acc += w * w;
    }
  }
  return std::sqrt(acc / static_cast<double>(frames));
}

/// W2 between two clouds: exact on the line, sliced otherwise.
inline double w2_estimate(const Matrix& a, const Matrix& b, std::size_t directions, std::uint64_t seed) {
  if (a.cols() == 1 && b.cols() == 1) return wasserstein_1d(column(a), column(b), 2);
  return sliced_w2(a, b, directions, seed);
}

/// W1 between two densities on an interval via the CDF formula
/// int |F - G| dx on an n-cell midpoint grid. Both densities are normalized
/// on the interval first.
inline double w1_density_1d(const std::function<double(double)>& f, const std::function<double(double)>& g,
                            double lo, double hi, std::size_t n = 20000) {
  if (!(hi > lo) || n == 0) throw InvalidParameter("w1_density_1d needs lo < hi and n >= 1");
  const double h = (hi - lo) / static_cast<double>(n);
  std::vector<double> pf(n), pg(n);
  double sf = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    pf[i] = std::max(f(x), 0.0);
    pg[i] = std::max(g(x), 0.0);
    sf += pf[i];
    sg += pg[i];
  }
  if (!(sf > 0.0 && sg > 0.0)) throw DegenerateDensityError("w1_density_1d: a density has no mass");
  double cf = 0.0, cg = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cf += pf[i] / sf;
    cg += pg[i] / sg;
    acc += std::abs(cf - cg);
  }
  return acc * h;
}

/// int |f - g| over [lo, hi] by the midpoint rule.
inline double l1_distance_1d(const std::function<double(double)>& f, const std::function<double(double)>& g,
                             double lo, double hi, std::size_t n = 20000) {
  if (!(hi > lo) || n == 0) throw InvalidParameter("l1_distance_1d needs lo < hi and n >= 1");
  const double h = (hi - lo) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + (static_cast<double>(i) + 0.5) * h;
    acc += std::abs(f(x) - g(x));
  }
  return acc * h;
}

/// Ordinary least-squares slope of y against t.
inline double ols_slope(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 2) throw InvalidParameter("ols_slope needs at least two paired values");
  const double n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (y[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  if (!(sxx > 0.0)) throw InvalidParameter("ols_slope: all times coincide");
  return sxy / sxx;
}

inline std::vector<double> second_moments(const TrajectoryEnsemble& ens) {
  std::vector<double> out;
  out.reserve(ens.nodes());
  for (const Matrix& x : ens.positions) out.push_back(x.rowwise().squaredNorm().mean());
  return out;
}

/// OLS slope of E|X_t|^2 against t over the grid nodes.
inline double second_moment_slope(const TrajectoryEnsemble& ens) {
  if (ens.nodes() < 2) throw InvalidParameter("second_moment_slope needs M >= 1");
  std::vector<double> t(ens.nodes());
  for (std::size_t m = 0; m < t.size(); ++m) t[m] = ens.grid.time(m);
  return ols_slope(t, second_moments(ens));
}

/// Law flow of the Markovian SDE with mu frozen, started from the given
/// draws of mu_bar.
inline TrajectoryEnsemble phi_map(const ProblemSpec& problem, const MeasureView& frozen, const Matrix& initial,
                                  const TimeGrid& grid, std::uint64_t seed) {
  SimulationOptions opt;
  opt.initial_positions = initial;
  return simulate_batch(problem, frozen, grid, static_cast<std::size_t>(initial.rows()), seed, 0, opt);
}

/// (trapezoid over nodes of e^{-alpha t} W2^2(mu_t, nu_t))^{1/2}, with t
/// measured from the grid start. W2 is exact in 1D and sliced above.
inline double h_alpha(const std::vector<Matrix>& mu, const std::vector<Matrix>& nu, double alpha,
                      const TimeGrid& grid, std::size_t directions = 128, std::uint64_t seed = 0) {
  if (!(alpha > 0.0)) throw InvalidParameter("h_alpha needs a positive weight alpha");
  if (mu.size() != grid.nodes() || nu.size() != grid.nodes()) {
    throw DimensionError("h_alpha: measure sequences do not match the grid");
  }
  const double dt = grid.dt();
  double acc = 0.0;
  for (std::size_t m = 0; m < mu.size(); ++m) {
    const double w = (m == 0 || m + 1 == mu.size()) ? 0.5 : 1.0;
    const double s = static_cast<double>(m) * dt;
    const double w2 = w2_estimate(mu[m], nu[m], directions, seed);
    acc += w * dt * std::exp(-alpha * s) * w2 * w2;
  }
  return std::sqrt(acc);
}

/// C0 = 2 (T + 1) C_lip^2.
inline double posterior_c0(double c_lip, double horizon) { return 2.0 * (horizon + 1.0) * c_lip * c_lip; }

/// sqrt(C0 / (alpha - C0)), the contraction factor of Phi under H_alpha.
inline double contraction_factor(double alpha, double c_lip, double horizon) {
  const double c0 = posterior_c0(c_lip, horizon);
  if (!(alpha > c0)) throw HypothesisViolation("contraction factor needs alpha > C0");
  return std::sqrt(c0 / (alpha - c0));
}

/// (1 - sqrt(C0/(alpha - C0)))^{-1} H_self, valid for alpha > 2 C0.
inline double posterior_bound(double h_self, double alpha, double c_lip, double horizon) {
  const double c0 = posterior_c0(c_lip, horizon);
  if (!(alpha > 2.0 * c0)) {
    throw HypothesisViolation("posterior bound needs alpha > 2 C0 = " + std::to_string(2.0 * c0));
  }
  if (h_self < 0.0) throw InvalidParameter("posterior bound needs H_self >= 0");
  return h_self / (1.0 - std::sqrt(c0 / (alpha - c0)));
}

// ------------------------------------------------------------------ output

struct MetricRow {
  std::size_t epoch = 0;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
};

inline void write_metrics_header(std::ostream& os) { os << "epoch,metric,value,stderr\n"; }

inline void write_metric(std::ostream& os, const MetricRow& r) {
  os.precision(17);
  os << r.epoch << ',' << r.metric << ',' << r.value << ',' << r.std_error << '\n';
}

/// Slice rows t,x0..,density_model,density_reference; a missing reference
/// writes nan.
inline void write_density_slice(std::ostream& os, double t, const Matrix& x, const Vector& model,
                                const Vector* reference, bool header) {
  if (header) {
    os << "t";
    for (Eigen::Index k = 0; k < x.cols(); ++k) os << ",x" << k;
    os << ",density_model,density_reference\n";
  }
  os.precision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    os << t;
    for (Eigen::Index k = 0; k < x.cols(); ++k) os << ',' << x(i, k);
    os << ',' << model(i) << ',';
    if (reference) {
      os << (*reference)(i);
    } else {
      os << "nan";
    }
    os << '\n';
  }
}

/// Points along axis 0 of the box with the other coordinates at zero.
inline Matrix axis_slice(const Box& box, std::size_t n) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(box.dim()));
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    x(static_cast<Eigen::Index>(i), 0) = box.lo[0] + f * box.width(0);
  }
  return x;
}

}  // namespace deepspoc
