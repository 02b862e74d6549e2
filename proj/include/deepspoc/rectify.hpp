#pragma once

// Quadrature on the truncation box and the rectification R(rho).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

#include "deepspoc/error.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

struct RectifyOptions {
  std::size_t scan_per_axis = 512;
  std::size_t scan_cap = std::size_t{1} << 20;
  std::size_t mc_points = 100000;
  std::size_t max_grid_dim = 3;  ///< above this, Monte Carlo is used
  double envelope_safety = 1.2;
  std::uint64_t seed = 0x51ED;

  bool operator==(const RectifyOptions&) const = default;
};

/// Points and weights with sum_q w_q f(x_q) approximating the integral of f
/// over the box.
struct Quadrature {
  Matrix points;
  Vector weights;
  bool is_grid = true;
  std::size_t per_axis = 0;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

/// Tensor midpoint rule with n points per axis.
inline Quadrature midpoint_grid(const Box& box, std::size_t n) {
  box.validate();
  if (n == 0) throw InvalidParameter("midpoint grid needs at least one point per axis");
  const std::size_t d = box.dim();
  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= n;
  Quadrature q;
  q.per_axis = n;
  q.points.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d));
  const double w = box.volume() / static_cast<double>(total);
  q.weights = Vector::Constant(static_cast<Eigen::Index>(total), w);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t j = rem % n;
      rem /= n;
      const double h = box.width(k) / static_cast<double>(n);
      q.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          box.lo[k] + (static_cast<double>(j) + 0.5) * h;
    }
  }
  return q;
}

/// Uniform Monte Carlo points with equal weights |box|/n.
inline Quadrature monte_carlo_points(const Box& box, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("Monte Carlo quadrature needs at least one point");
  CounterRng rng(seed, 0, Lane::generic, 0, 0);
  Quadrature q;
  q.is_grid = false;
  q.points = uniform_points(n, box, rng);
  q.weights = Vector::Constant(static_cast<Eigen::Index>(n), box.volume() / static_cast<double>(n));
  return q;
}

/// Quadrature used for rectification normalisers and envelope scans.
inline Quadrature rectify_quadrature(const Box& box, const RectifyOptions& opt) {
  const std::size_t d = box.dim();
  if (d > opt.max_grid_dim) return monte_carlo_points(box, opt.mc_points, opt.seed);
  std::size_t n = opt.scan_per_axis;
  const double cap_axis = std::floor(std::pow(static_cast<double>(opt.scan_cap), 1.0 / static_cast<double>(d)) + 1e-9);
  n = std::max<std::size_t>(1, std::min(n, static_cast<std::size_t>(cap_axis)));
  return midpoint_grid(box, n);
}

struct Rectification {
  double normalizer = 1.0;  ///< integral of max(rho, 0) over the box
  double max_value = 0.0;   ///< max of the raw values on the scan
  double envelope = 0.0;    ///< max of R(rho) on the scan times the safety factor
};

/// Normaliser and envelope from raw values at quadrature points.
inline Rectification rectify_values(const Vector& raw, const Quadrature& q, double safety = 1.2) {
  if (raw.size() != q.weights.size()) throw DimensionError("rectify: value count differs from quadrature size");
  double z = 0.0;
  double mx = 0.0;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double v = raw(i);
    if (!std::isfinite(v)) throw NumericError("rectify: non-finite density value on the scan grid");
    if (v > 0.0) z += q.weights(i) * v;
    mx = std::max(mx, v);
  }
  if (!(z > 0.0)) {
    throw DegenerateDensityError("rectify: density is nonpositive everywhere on the quadrature grid");
  }
  return Rectification{z, mx, safety * mx / z};
}

/// R(rho) = max(rho, 0)/Z on the box and 0 outside.
inline double rectified_value(double raw, double normalizer, const Box& box, const double* x) {
  for (std::size_t k = 0; k < box.dim(); ++k) {
    if (!(x[k] >= box.lo[k] && x[k] <= box.hi[k])) return 0.0;
  }
  return raw > 0.0 ? raw / normalizer : 0.0;
}

/// A raw function together with its rectification.
class Rectified {
 public:
  using Fn = std::function<double(const double*)>;

  Rectified(Fn raw, Box box, const RectifyOptions& opt = {}) : raw_(std::move(raw)), box_(std::move(box)) {
    const Quadrature q = rectify_quadrature(box_, opt);
    Vector v(q.points.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = raw_(q.points.row(i).data());
    info_ = rectify_values(v, q, opt.envelope_safety);
  }

  double operator()(const double* x) const { return rectified_value(raw_(x), info_.normalizer, box_, x); }
  double normalizer() const { return info_.normalizer; }
  double envelope() const { return info_.envelope; }
  const Box& box() const { return box_; }

 private:
  Fn raw_;
  Box box_;
  Rectification info_;
};

}  // namespace deepspoc
