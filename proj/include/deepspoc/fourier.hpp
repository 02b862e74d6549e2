#pragma once

// Cosine spectral density model, projection P_N and the closed-form update.

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/rectify.hpp"
#include "deepspoc/sde_engine.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

/// Tensorised half-period cosine basis on a box: along an axis of width W,
/// phi_0 = 1/sqrt(W) and phi_k = sqrt(2/W) cos(k pi (x - lo)/W). Multi-index
/// nu = (k_0, ..., k_{d-1}) is flattened with k_0 varying fastest.
class CosineBasis {
 public:
  CosineBasis() = default;
  CosineBasis(Box box, std::size_t per_axis, std::size_t quad_per_axis = 0)
      : box_(std::move(box)), n_(per_axis) {
    box_.validate();
    if (n_ == 0) throw InvalidParameter("cosine basis needs at least one function per axis");
    quad_ = quad_per_axis == 0 ? default_quadrature(box_.dim(), n_) : quad_per_axis;
    if (quad_ < 2 * n_) {
      throw ConfigError("projection quadrature has " + std::to_string(quad_) +
                        " points per axis, below the Nyquist minimum 2*" + std::to_string(n_));
    }
    size_ = 1;
    for (std::size_t k = 0; k < box_.dim(); ++k) size_ *= n_;
    grid_ = std::make_shared<const Quadrature>(midpoint_grid(box_, quad_));
  }

  /// 1024 points per axis in 1D; otherwise about 2^20 points in total, and
  /// never fewer than 4n per axis.
  static std::size_t default_quadrature(std::size_t d, std::size_t n) {
    const double cap = std::floor(std::pow(1048576.0, 1.0 / static_cast<double>(d)) + 1e-9);
    return std::max<std::size_t>(4 * n, std::min<std::size_t>(1024, static_cast<std::size_t>(cap)));
  }

  const Box& box() const { return box_; }
  std::size_t dim() const { return box_.dim(); }
  std::size_t per_axis() const { return n_; }
  std::size_t size() const { return size_; }
  std::size_t quad_per_axis() const { return quad_; }

  /// phi_k(x) along axis `axis` for k < n, written to out[0..n).
  void axis_values(std::size_t axis, double x, double* out) const {
    const double w = box_.width(axis);
    const double a = kPi * (x - box_.lo[axis]) / w;
    const double c = std::sqrt(2.0 / w);
    out[0] = 1.0 / std::sqrt(w);
    for (std::size_t k = 1; k < n_; ++k) out[k] = c * std::cos(static_cast<double>(k) * a);
  }

  void axis_derivatives(std::size_t axis, double x, double* out) const {
    const double w = box_.width(axis);
    const double a = kPi * (x - box_.lo[axis]) / w;
    const double c = std::sqrt(2.0 / w);
    out[0] = 0.0;
    for (std::size_t k = 1; k < n_; ++k) {
      const double kk = static_cast<double>(k);
      out[k] = -c * (kk * kPi / w) * std::sin(kk * a);
    }
  }

  /// e_nu(x) for every nu, written to out[0..size()).
  void values(const double* x, double* out) const {
    const std::size_t d = dim();
    std::vector<double> axis(d * n_);
    for (std::size_t k = 0; k < d; ++k) axis_values(k, x[k], axis.data() + k * n_);
    tensor(axis.data(), out);
  }

  /// Tensor product of per-axis tables (d blocks of n values).
  void tensor(const double* axis, double* out) const {
    const std::size_t d = dim();
    out[0] = 1.0;
    std::size_t len = 1;
    for (std::size_t k = 0; k < d; ++k) {
      const double* a = axis + k * n_;
      for (std::size_t j = n_; j-- > 0;) {
        for (std::size_t i = 0; i < len; ++i) out[j * len + i] = out[i] * a[j];
      }
      len *= n_;
    }
  }

  /// Sum_nu theta_nu e_nu(x).
  double evaluate(std::span<const double> theta, const double* x) const {
    std::vector<double> e(size_);
    values(x, e.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < size_; ++i) acc += theta[i] * e[i];
    return acc;
  }

  /// Midpoint grid used for projections.
  const Quadrature& quadrature() const { return *grid_; }

  /// Coefficients of the function whose values on quadrature() are `f`.
  Vector project_values(const Vector& f) const {
    const Quadrature& q = quadrature();
    if (f.size() != q.weights.size()) throw DimensionError("projection: value count differs from grid size");
    const std::size_t d = dim();
    // Axis tables at the 1D midpoints.
    std::vector<Eigen::MatrixXd> tables(d);
    for (std::size_t k = 0; k < d; ++k) {
      tables[k].resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(quad_));
      const double h = box_.width(k) / static_cast<double>(quad_);
      std::vector<double> v(n_);
      for (std::size_t j = 0; j < quad_; ++j) {
        axis_values(k, box_.lo[k] + (static_cast<double>(j) + 0.5) * h, v.data());
        for (std::size_t i = 0; i < n_; ++i) {
          tables[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
        }
      }
    }
    // Contract one axis at a time; axis 0 is the fastest index.
    std::vector<double> cur(f.data(), f.data() + f.size());
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] *= q.weights(static_cast<Eigen::Index>(i));
    std::size_t inner = 1;
    std::size_t outer = cur.size() / quad_;
    for (std::size_t k = 0; k < d; ++k) {
      // cur has shape inner x quad_ x outer (inner fastest); contract the middle axis.
      std::vector<double> next(inner * n_ * outer, 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < quad_; ++j) {
          const double* src = cur.data() + (o * quad_ + j) * inner;
          for (std::size_t i = 0; i < n_; ++i) {
            const double b = tables[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            double* dst = next.data() + (o * n_ + i) * inner;
            for (std::size_t r = 0; r < inner; ++r) dst[r] += b * src[r];
          }
        }
      }
      cur.swap(next);
      inner *= n_;
      if (k + 1 < d) outer /= quad_;
    }
    return Eigen::Map<Vector>(cur.data(), static_cast<Eigen::Index>(cur.size()));
  }

  bool operator==(const CosineBasis& o) const {
    return box_ == o.box_ && n_ == o.n_ && quad_ == o.quad_;
  }

 private:
  Box box_;
  std::size_t n_ = 1;
  std::size_t quad_ = 1024;
  std::size_t size_ = 1;
  std::shared_ptr<const Quadrature> grid_;
};

/// P_N f computed by midpoint quadrature.
inline Vector fourier_project(const std::function<double(const double*)>& f, const CosineBasis& basis) {
  const Quadrature& q = basis.quadrature();
  Vector v(q.points.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f(q.points.row(i).data());
  return basis.project_values(v);
}

/// P_N of the mollified empirical density of `mu`.
inline Vector project_kde(const EmpiricalMeasure& mu, const MollifierSpec& moll, const CosineBasis& basis) {
  return basis.project_values(kde_values(mu, moll, basis.quadrature().points));
}

/// theta <- (1 - 2a) theta + 2a p without the rate guard.
inline void fourier_update_unchecked(std::span<double> theta, const Vector& projection, double rate) {
  if (projection.size() != static_cast<Eigen::Index>(theta.size())) {
    throw DimensionError("fourier_update: coefficient length mismatch");
  }
  const double keep = 1.0 - 2.0 * rate;
  const double take = 2.0 * rate;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = keep * theta[i] + take * projection(static_cast<Eigen::Index>(i));
  }
}

/// theta <- (1 - 2a) theta + 2a P_N(rho_hat), a in (0, 1/2].
inline void fourier_update(std::span<double> theta, const Vector& projection, double rate) {
  if (!(rate > 0.0 && rate <= 0.5)) {
    throw InvalidParameter("fourier update rate must lie in (0, 1/2]");
  }
  fourier_update_unchecked(theta, projection, rate);
}

/// Coefficient table theta[m][nu] over the nodes of a time grid; values
/// between nodes are interpolated linearly in t.
class FourierDensity final : public DensityModel {
 public:
  FourierDensity(CosineBasis basis, TimeGrid grid) : basis_(std::move(basis)), grid_(grid) {
    theta_.assign(grid_.nodes() * basis_.size(), 0.0);
    set_uniform();
  }

  /// Every node set to the uniform density on the box.
  void set_uniform() {
    const double c0 = 1.0 / std::sqrt(basis_.box().volume());
    std::fill(theta_.begin(), theta_.end(), 0.0);
    for (std::size_t m = 0; m < grid_.nodes(); ++m) theta_[m * basis_.size()] = c0;
  }

  ModelKind kind() const override { return ModelKind::fourier; }
  std::size_t dim() const override { return basis_.dim(); }
  const Box& domain() const override { return basis_.box(); }
  Capabilities capabilities() const override { return {false, false, true}; }

  const CosineBasis& basis() const { return basis_; }
  const TimeGrid& grid() const { return grid_; }

  std::span<double> node(std::size_t m) {
    return std::span<double>(theta_).subspan(m * basis_.size(), basis_.size());
  }
  std::span<const double> node(std::size_t m) const {
    return std::span<const double>(theta_).subspan(m * basis_.size(), basis_.size());
  }

  void eval(double t, const Matrix& x, Vector& out) const override {
    check_dim(x);
    const Interp ip = interp(t);
    out.resize(x.rows());
    parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t i) {
      const auto r = static_cast<Eigen::Index>(i);
      double v = ip.w0 * basis_.evaluate(node(ip.m0), x.row(r).data());
      if (ip.w1 != 0.0) v += ip.w1 * basis_.evaluate(node(ip.m1), x.row(r).data());
      out(r) = v;
    });
  }

  void grad_x(double t, const Matrix& x, Matrix& out) const override {
    check_dim(x);
    const Interp ip = interp(t);
    const std::size_t d = dim();
    const std::size_t n = basis_.per_axis();
    out.resize(x.rows(), x.cols());
    parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t i) {
      const auto r = static_cast<Eigen::Index>(i);
      std::vector<double> vals(d * n), ders(d * n), tab(d * n), e(basis_.size());
      for (std::size_t k = 0; k < d; ++k) {
        basis_.axis_values(k, x(r, static_cast<Eigen::Index>(k)), vals.data() + k * n);
        basis_.axis_derivatives(k, x(r, static_cast<Eigen::Index>(k)), ders.data() + k * n);
      }
      for (std::size_t k = 0; k < d; ++k) {
        tab = vals;
        std::copy(ders.begin() + static_cast<std::ptrdiff_t>(k * n),
                  ders.begin() + static_cast<std::ptrdiff_t>((k + 1) * n),
                  tab.begin() + static_cast<std::ptrdiff_t>(k * n));
        basis_.tensor(tab.data(), e.data());
        double g = 0.0;
        auto a = node(ip.m0);
        auto b = node(ip.m1);
        for (std::size_t j = 0; j < e.size(); ++j) g += (ip.w0 * a[j] + ip.w1 * b[j]) * e[j];
        out(r, static_cast<Eigen::Index>(k)) = g;
      }
    });
  }

  void accumulate_param_grad(double t, const Matrix& x, const Vector& w,
                             std::span<double> grad) const override {
    check_batch(x, w, dim());
    check_grad_size(grad, num_params());
    const Interp ip = interp(t);
    const std::size_t nb = basis_.size();
    std::vector<double> e(nb);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      basis_.values(x.row(i).data(), e.data());
      for (std::size_t j = 0; j < nb; ++j) {
        grad[ip.m0 * nb + j] += ip.w0 * w(i) * e[j];
        if (ip.w1 != 0.0) grad[ip.m1 * nb + j] += ip.w1 * w(i) * e[j];
      }
    }
  }

  std::size_t num_params() const override { return theta_.size(); }
  std::span<const double> params() const override { return theta_; }
  std::span<double> params_mut() override { return theta_; }
  std::unique_ptr<DensityModel> clone() const override { return std::make_unique<FourierDensity>(*this); }

 private:
  struct Interp {
    std::size_t m0, m1;
    double w0, w1;
  };

  Interp interp(double t) const {
    const double s = (t - grid_.t0()) / grid_.dt();
    const double steps = static_cast<double>(grid_.steps());
    if (!(s > 0.0)) return {0, 0, 1.0, 0.0};
    if (s >= steps) return {grid_.steps(), grid_.steps(), 1.0, 0.0};
    const double nearest = std::round(s);
    if (std::abs(s - nearest) < 1e-9) {
      const auto m = static_cast<std::size_t>(nearest);
      return {m, m, 1.0, 0.0};
    }
    const auto m = static_cast<std::size_t>(std::floor(s));
    const double f = s - static_cast<double>(m);
    return {m, m + 1, 1.0 - f, f};
  }

  void check_dim(const Matrix& x) const {
    if (x.cols() != static_cast<Eigen::Index>(dim())) throw DimensionError("fourier model: point dimension mismatch");
  }

  CosineBasis basis_;
  TimeGrid grid_;
  std::vector<double> theta_;
};

}  // namespace deepspoc
