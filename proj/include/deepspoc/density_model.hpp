#pragma once

// The time-dependent density model interface and its measure view.

#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>

#include "deepspoc/error.hpp"
#include "deepspoc/measure_view.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/rectify.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

enum class ModelKind { fourier, mlp, flow };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::fourier: return "fourier";
    case ModelKind::mlp: return "mlp";
    case ModelKind::flow: return "flow";
  }
  return "unknown";
}

struct Capabilities {
  bool exact_density = false;    ///< eval is already a normalised density on R^d
  bool direct_sampling = false;  ///< sample_direct is available
  bool spatial_gradient = false; ///< grad_x is available
};

/// rho_theta(t, x) on a truncation box over a time window.
///
/// eval returns the raw model output (unconstrained for Fourier and MLP,
/// the density itself for exact models). Gradient accumulators add into
/// `grad`, which has num_params() entries.
class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual const Box& domain() const = 0;
  virtual Capabilities capabilities() const = 0;

  virtual void eval(double t, const Matrix& x, Vector& out) const = 0;

  /// Log density (exact models only).
  virtual void log_eval(double /*t*/, const Matrix& /*x*/, Vector& /*out*/) const {
    throw CapabilityError(to_string(kind()) + " model has no exact log density");
  }

  /// Gradient of eval with respect to x.
  virtual void grad_x(double /*t*/, const Matrix& /*x*/, Matrix& /*out*/) const {
    throw CapabilityError(to_string(kind()) + " model has no spatial gradient in this configuration");
  }

  virtual Matrix sample_direct(double /*t*/, std::size_t /*n*/, CounterRng& /*rng*/) const {
    throw CapabilityError(to_string(kind()) + " model cannot be sampled directly");
  }

  /// grad += d/dtheta sum_j w_j eval(t, x_j).
  virtual void accumulate_param_grad(double t, const Matrix& x, const Vector& w,
                                     std::span<double> grad) const = 0;

  /// grad += d/dtheta sum_j w_j log_eval(t, x_j) (exact models only).
  virtual void accumulate_log_param_grad(double /*t*/, const Matrix& /*x*/, const Vector& /*w*/,
                                         std::span<double> /*grad*/) const {
    throw CapabilityError(to_string(kind()) + " model has no exact log density");
  }

  virtual std::size_t num_params() const = 0;
  virtual std::span<const double> params() const = 0;
  virtual std::span<double> params_mut() = 0;
  virtual std::unique_ptr<DensityModel> clone() const = 0;

  /// theta += delta.
  void param_step(std::span<const double> delta) {
    auto p = params_mut();
    if (delta.size() != p.size()) throw DimensionError("param_step: update length mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += delta[i];
  }

  void set_params(std::span<const double> values) {
    auto p = params_mut();
    if (values.size() != p.size()) throw DimensionError("set_params: parameter length mismatch");
    std::copy(values.begin(), values.end(), p.begin());
  }

 protected:
  static void check_grad_size(std::span<double> grad, std::size_t n) {
    if (grad.size() != n) throw DimensionError("gradient buffer has the wrong length");
  }
  static void check_batch(const Matrix& x, const Vector& w, std::size_t d) {
    if (x.cols() != static_cast<Eigen::Index>(d)) throw DimensionError("point dimension mismatch");
    if (w.size() != x.rows()) throw DimensionError("weight count differs from point count");
  }
};

struct SamplerOptions {
  std::size_t max_tries = 1000;  ///< proposals allowed per requested sample
  std::size_t block = 4096;
  std::size_t max_restarts = 8;
};

struct SampleStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t envelope_raises = 0;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

using BatchDensity = std::function<void(const Matrix& x, Vector& out)>;

/// Accept-reject with uniform proposals on `box` against density/envelope.
/// A proposal above the envelope raises the envelope by the same ratio
/// times 1.2 and restarts the draw so the output stays exact.
inline Matrix accept_reject(const BatchDensity& density, const Box& box, double envelope,
                            std::size_t n, CounterRng& rng, const SamplerOptions& opt = {},
                            SampleStats* stats = nullptr) {
  if (!(envelope > 0.0) || !std::isfinite(envelope)) {
    throw InvalidParameter("accept-reject envelope must be positive and finite");
  }
  const auto d = static_cast<Eigen::Index>(box.dim());
  SampleStats local;
  Matrix out(static_cast<Eigen::Index>(n), d);
  if (n == 0) return out;
  const std::size_t budget = opt.max_tries * n;
  for (std::size_t restart = 0;; ++restart) {
    std::size_t got = 0;
    std::size_t proposed = 0;
    bool violated = false;
    double worst = 0.0;
    while (got < n && proposed < budget && !violated) {
      const std::size_t b = std::min(opt.block, budget - proposed);
      Matrix prop = uniform_points(b, box, rng);
      Vector u(static_cast<Eigen::Index>(b));
      for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform();
      Vector val;
      density(prop, val);
      proposed += b;
      Eigen::Index i = 0;
      for (; i < prop.rows() && got < n; ++i) {
        if (val(i) > envelope) {
          violated = true;
          worst = std::max(worst, val(i));
        }
        if (u(i) * envelope < val(i)) {
          out.row(static_cast<Eigen::Index>(got++)) = prop.row(i);
          ++local.accepted;
        }
      }
      local.proposals += static_cast<std::size_t>(i);
    }
    if (violated && restart < opt.max_restarts) {
      envelope = 1.2 * worst;
      ++local.envelope_raises;
      continue;
    }
    if (stats) {
      stats->proposals += local.proposals;
      stats->accepted += local.accepted;
      stats->envelope_raises += local.envelope_raises;
    }
    if (got < n) {
      throw SamplingFailure("accept-reject produced " + std::to_string(got) + " of " +
                                std::to_string(n) + " samples",
                            local.acceptance_rate());
    }
    return out;
  }
}

/// The frozen model seen as a probability measure: the density is R(rho)
/// for raw models and eval itself for exact models. Per-time normalisers are
/// computed on first use and cached.
class ModelView final : public MeasureView {
 public:
  explicit ModelView(const DensityModel& model, RectifyOptions rect = {}, SamplerOptions sampler = {})
      : model_(model), rect_(rect), sampler_(sampler) {}

  std::size_t dim() const override { return model_.dim(); }
  const DensityModel& model() const { return model_; }

  /// Normaliser and envelope of R(rho(t, .)).
  Rectification rectification(double t) const {
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find(t);
      if (it != cache_.end()) return it->second;
    }
    const Quadrature& q = quadrature();
    Vector raw;
    model_.eval(t, q.points, raw);
    Rectification r = rectify_values(raw, q, rect_.envelope_safety);
    std::lock_guard lock(mutex_);
    cache_.emplace(t, r);
    return r;
  }

  void density(double t, const Matrix& x, Vector& out) const override {
    model_.eval(t, x, out);
    if (model_.capabilities().exact_density) return;
    const double z = rectification(t).normalizer;
    const Box& box = model_.domain();
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = rectified_value(out(i), z, box, x.row(i).data());
  }

  void log_density(double t, const Matrix& x, Vector& out) const {
    if (model_.capabilities().exact_density) {
      model_.log_eval(t, x, out);
      return;
    }
    density(t, x, out);
    out = out.array().log();
  }

  void density_gradient(double t, const Matrix& x, Matrix& out) const override {
    model_.grad_x(t, x, out);
    if (model_.capabilities().exact_density) return;
    Vector raw;
    model_.eval(t, x, raw);
    const double z = rectification(t).normalizer;
    const Box& box = model_.domain();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (raw(i) > 0.0 && box.contains(x.row(i))) {
        out.row(i) /= z;
      } else {
        out.row(i).setZero();
      }
    }
  }

  Matrix sample(double t, std::size_t n, CounterRng& rng) const override {
    if (model_.capabilities().direct_sampling) return model_.sample_direct(t, n, rng);
    const Rectification r = rectification(t);
    SampleStats local;
    Matrix out = accept_reject([&](const Matrix& p, Vector& v) { density(t, p, v); },
                               model_.domain(), r.envelope, n, rng, sampler_, &local);
    proposals_ += local.proposals;
    accepted_ += local.accepted;
    envelope_raises_ += local.envelope_raises;
    return out;
  }

  SampleStats sampling_stats() const {
    return SampleStats{proposals_.load(), accepted_.load(), envelope_raises_.load()};
  }

  const Quadrature& quadrature() const {
    std::lock_guard lock(mutex_);
    if (!quad_) quad_ = std::make_unique<Quadrature>(rectify_quadrature(model_.domain(), rect_));
    return *quad_;
  }

 private:
  const DensityModel& model_;
  RectifyOptions rect_;
  SamplerOptions sampler_;
  mutable std::mutex mutex_;
  mutable std::map<double, Rectification> cache_;
  mutable std::unique_ptr<Quadrature> quad_;
  mutable std::atomic<std::size_t> proposals_{0};
  mutable std::atomic<std::size_t> accepted_{0};
  mutable std::atomic<std::size_t> envelope_raises_{0};
};

}  // namespace deepspoc
