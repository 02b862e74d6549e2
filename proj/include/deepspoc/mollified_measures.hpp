#pragma once

// Empirical measures of particle batches and their mollified densities.

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <vector>

#include "deepspoc/measure_view.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/sde_engine.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

/// Surface area of the unit sphere in R^d.
inline double unit_sphere_area(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return 2.0 * std::pow(kPi, h) / std::tgamma(h);
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return std::pow(kPi, h) / std::tgamma(h + 1.0);
}

/// Normaliser of the triangular kernel (C/eps^d)(1 - |x|/eps)_+ in R^d.
/// The radial integral of (1-r) r^{d-1} over [0,1] is 1/(d(d+1)).
inline double triangular_constant(std::size_t d) {
  const double dd = static_cast<double>(d);
  return dd * (dd + 1.0) / unit_sphere_area(d);
}

enum class KernelKind { gaussian, triangular };

struct MollifierSpec {
  KernelKind kind = KernelKind::gaussian;
  double epsilon = 0.01;
  std::size_t dim = 1;

  MollifierSpec() = default;
  MollifierSpec(KernelKind k, double eps, std::size_t d) : kind(k), epsilon(eps), dim(d) {
    validate();
  }

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw InvalidParameter("mollifier bandwidth epsilon must be positive");
    }
    if (dim == 0) throw DimensionError("mollifier dimension must be positive");
  }

  double normalizer() const {
    const double d = static_cast<double>(dim);
    if (kind == KernelKind::gaussian) return std::pow(2.0 * kPi * epsilon * epsilon, -0.5 * d);
    return triangular_constant(dim) / std::pow(epsilon, d);
  }

  /// Kernel value as a function of the squared distance.
  double kernel_sq(double r2) const {
    if (kind == KernelKind::gaussian) {
      return normalizer() * std::exp(-r2 / (2.0 * epsilon * epsilon));
    }
    const double r = std::sqrt(r2);
    return r >= epsilon ? 0.0 : normalizer() * (1.0 - r / epsilon);
  }

  /// Distance beyond which the kernel is below 1e-16 of its peak (exactly 0
  /// for the triangular kernel).
  double cutoff() const { return kind == KernelKind::gaussian ? 8.6 * epsilon : epsilon; }

  bool operator==(const MollifierSpec&) const = default;
};

/// Atomic measure sum_i w_i delta_{X_i}; weights default to 1/K.
struct EmpiricalMeasure {
  Matrix points;
  std::optional<Vector> weights;

  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(Matrix pts, std::optional<Vector> w = std::nullopt)
      : points(std::move(pts)), weights(std::move(w)) {
    validate();
  }

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }

  double weight(Eigen::Index i) const {
    return weights ? (*weights)(i) : 1.0 / static_cast<double>(points.rows());
  }

  void validate() const {
    if (points.rows() == 0) throw EmptyBatchError("empirical measure needs at least one point");
    if (!points.allFinite()) throw NumericError("empirical measure has non-finite points");
    if (weights && weights->size() != points.rows()) {
      throw DimensionError("empirical measure weight count differs from point count");
    }
  }
};

/// Direct evaluation of (1/K) sum_i f_eps(x - X_i).
inline double kde_eval(const EmpiricalMeasure& mu, const MollifierSpec& moll, const double* x) {
  moll.validate();
  const Eigen::Index d = mu.points.cols();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.points.rows(); ++i) {
    double r2 = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = x[k] - mu.points(i, k);
      r2 += diff * diff;
    }
    acc += mu.weight(i) * moll.kernel_sq(r2);
  }
  return acc;
}

/// Sorted-by-first-coordinate index for kernel sums. Only atoms whose first
/// coordinate lies within the kernel cutoff of a query are visited.
class KdeIndex {
 public:
  KdeIndex(const EmpiricalMeasure& mu, const MollifierSpec& moll) : moll_(moll) {
    moll_.validate();
    if (mu.dim() != moll.dim) throw DimensionError("kde: measure and mollifier dimensions differ");
    const Eigen::Index n = mu.points.rows();
    const Eigen::Index d = mu.points.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return mu.points(a, 0) < mu.points(b, 0);
    });
    sorted_.resize(n, d);
    weights_.resize(n);
    keys_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index i = order[static_cast<std::size_t>(j)];
      sorted_.row(j) = mu.points.row(i);
      weights_(j) = mu.weight(i);
      keys_[static_cast<std::size_t>(j)] = mu.points(i, 0);
    }
    norm_ = moll_.normalizer();
    inv2eps2_ = 1.0 / (2.0 * moll_.epsilon * moll_.epsilon);
    cutoff_ = moll_.cutoff();
  }

  double operator()(const double* x) const {
    const auto lo = std::lower_bound(keys_.begin(), keys_.end(), x[0] - cutoff_);
    const auto hi = std::upper_bound(lo, keys_.end(), x[0] + cutoff_);
    const Eigen::Index d = sorted_.cols();
    const double cut2 = cutoff_ * cutoff_;
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const Eigen::Index j = it - keys_.begin();
      double r2 = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = x[k] - sorted_(j, k);
        r2 += diff * diff;
      }
      if (r2 >= cut2) continue;
      if (moll_.kind == KernelKind::gaussian) {
        acc += weights_(j) * std::exp(-r2 * inv2eps2_);
      } else {
        acc += weights_(j) * (1.0 - std::sqrt(r2) / moll_.epsilon);
      }
    }
    return norm_ * acc;
  }

  /// Gradient of the mollified density at x.
  void gradient(const double* x, double* out) const {
    const Eigen::Index d = sorted_.cols();
    for (Eigen::Index k = 0; k < d; ++k) out[k] = 0.0;
    const auto lo = std::lower_bound(keys_.begin(), keys_.end(), x[0] - cutoff_);
    const auto hi = std::upper_bound(lo, keys_.end(), x[0] + cutoff_);
    const double eps = moll_.epsilon;
    for (auto it = lo; it != hi; ++it) {
      const Eigen::Index j = it - keys_.begin();
      double r2 = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = x[k] - sorted_(j, k);
        r2 += diff * diff;
      }
      if (r2 >= cutoff_ * cutoff_) continue;
      double factor = 0.0;
      if (moll_.kind == KernelKind::gaussian) {
        factor = -weights_(j) * std::exp(-r2 * inv2eps2_) / (eps * eps);
      } else {
        const double r = std::sqrt(r2);
        if (r == 0.0) continue;
        factor = -weights_(j) / (eps * r);
      }
      for (Eigen::Index k = 0; k < d; ++k) out[k] += factor * (x[k] - sorted_(j, k));
    }
    for (Eigen::Index k = 0; k < d; ++k) out[k] *= norm_;
  }

  const MollifierSpec& mollifier() const { return moll_; }

 private:
  MollifierSpec moll_;
  Matrix sorted_;
  Vector weights_;
  std::vector<double> keys_;
  double norm_ = 1.0;
  double inv2eps2_ = 1.0;
  double cutoff_ = 0.0;
};

/// Mollified density of `mu` at each row of `queries`.
inline Vector kde_values(const EmpiricalMeasure& mu, const MollifierSpec& moll,
                         const Matrix& queries) {
  KdeIndex index(mu, moll);
  Vector out(queries.rows());
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t q) {
    out(static_cast<Eigen::Index>(q)) = index(queries.row(static_cast<Eigen::Index>(q)).data());
  });
  return out;
}

struct TruncationReport {
  EmpiricalMeasure measure;
  std::size_t dropped = 0;
};

/// Maps particles outside [-half_width, half_width]^d to the origin
/// (X 1_{X in box}); the measure keeps its size.
inline TruncationReport truncate_particles(const EmpiricalMeasure& mu, double half_width) {
  if (!(half_width > 0.0)) throw InvalidParameter("truncation box must be nonempty");
  TruncationReport report{mu, 0};
  Matrix& pts = report.measure.points;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    bool inside = true;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
      if (!(std::abs(pts(i, k)) <= half_width)) inside = false;
    }
    if (!inside) {
      pts.row(i).setZero();
      ++report.dropped;
    }
  }
  return report;
}

/// Table of rho_hat_{t_m}(x) for every node m and every x in queries[m].
/// Entries are plain numbers: nothing downstream differentiates through them.
inline std::vector<Vector> batch_kde_table(const TrajectoryEnsemble& ens, const MollifierSpec& moll,
                                           const std::vector<Matrix>& queries) {
  if (queries.size() != ens.nodes()) {
    throw DimensionError("batch_kde_table: need one query set per time node");
  }
  std::vector<Vector> table(ens.nodes());
  for (std::size_t m = 0; m < ens.nodes(); ++m) {
    if (queries[m].rows() == 0) throw InvalidParameter("batch_kde_table: empty query set");
    table[m] = kde_values(EmpiricalMeasure(ens.positions[m]), moll, queries[m]);
  }
  return table;
}

/// Draw from the kernel f_eps centred at the origin.
inline void sample_kernel(const MollifierSpec& moll, CounterRng& rng, double* out) {
  const std::size_t d = moll.dim;
  if (moll.kind == KernelKind::gaussian) {
    for (std::size_t k = 0; k < d; ++k) out[k] = moll.epsilon * rng.normal();
    return;
  }
  double r = 0.0;
  for (;;) {
    r = moll.epsilon * std::pow(rng.uniform_open(), 1.0 / static_cast<double>(d));
    if (rng.uniform() < 1.0 - r / moll.epsilon) break;
  }
  double norm = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    out[k] = rng.normal();
    norm += out[k] * out[k];
  }
  norm = std::sqrt(norm);
  for (std::size_t k = 0; k < d; ++k) out[k] *= r / norm;
}

/// Time-indexed mollified empirical measures (one atom set per grid node).
/// Used by the particle baselines as the mu_t seen by the coefficients.
class EmpiricalView final : public MeasureView {
 public:
  EmpiricalView(TimeGrid grid, std::vector<EmpiricalMeasure> nodes, MollifierSpec moll)
      : grid_(grid), nodes_(std::move(nodes)), moll_(moll) {
    if (nodes_.empty()) throw EmptyBatchError("empirical view needs at least one node");
    moll_.validate();
    indices_ = std::vector<std::unique_ptr<KdeIndex>>(nodes_.size());
    locks_ = std::make_unique<std::mutex>();
  }

  /// A single measure used for every time.
  static EmpiricalView constant(EmpiricalMeasure mu, MollifierSpec moll) {
    std::vector<EmpiricalMeasure> nodes;
    nodes.push_back(std::move(mu));
    return EmpiricalView(TimeGrid(0.0, 1.0, 1), std::move(nodes), moll);
  }

  std::size_t dim() const override { return moll_.dim; }

  void density(double t, const Matrix& x, Vector& out) const override {
    const KdeIndex& idx = index(node(t));
    out.resize(x.rows());
    parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t q) {
      out(static_cast<Eigen::Index>(q)) = idx(x.row(static_cast<Eigen::Index>(q)).data());
    });
  }

  void density_gradient(double t, const Matrix& x, Matrix& out) const override {
    const KdeIndex& idx = index(node(t));
    out.resize(x.rows(), x.cols());
    parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t q) {
      const auto i = static_cast<Eigen::Index>(q);
      idx.gradient(x.row(i).data(), out.row(i).data());
    });
  }

  Matrix sample(double t, std::size_t n, CounterRng& rng) const override {
    const EmpiricalMeasure& mu = nodes_[node(t)];
    std::vector<double> cdf(mu.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      acc += mu.weight(static_cast<Eigen::Index>(i));
      cdf[i] = acc;
    }
    Matrix out(static_cast<Eigen::Index>(n), mu.points.cols());
    std::vector<double> jitter(moll_.dim);
    for (std::size_t s = 0; s < n; ++s) {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto i = static_cast<Eigen::Index>(
          std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(mu.size()) - 1));
      sample_kernel(moll_, rng, jitter.data());
      for (std::size_t k = 0; k < moll_.dim; ++k) {
        out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) =
            mu.points(i, static_cast<Eigen::Index>(k)) + jitter[k];
      }
    }
    return out;
  }

  const Matrix* atoms(double t) const override { return &nodes_[node(t)].points; }
  const Vector* atom_weights(double t) const override {
    const auto& w = nodes_[node(t)].weights;
    return w ? &*w : nullptr;
  }

  const EmpiricalMeasure& measure(std::size_t m) const { return nodes_.at(m); }
  std::size_t node(double t) const {
    return std::min(grid_.nearest_node(t), nodes_.size() - 1);
  }

  /// KDE index of node m, built on first use.
  const KdeIndex& index(std::size_t m) const {
    std::lock_guard lock(*locks_);
    auto& slot = indices_.at(m);
    if (!slot) slot = std::make_unique<KdeIndex>(nodes_[m], moll_);
    return *slot;
  }

 private:
  TimeGrid grid_;
  std::vector<EmpiricalMeasure> nodes_;
  MollifierSpec moll_;
  mutable std::vector<std::unique_ptr<KdeIndex>> indices_;
  std::unique_ptr<std::mutex> locks_;
};

}  // namespace deepspoc
