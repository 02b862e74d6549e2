#pragma once

// The squared-distance, KL and path losses with their parameter gradients.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/rectify.hpp"
#include "deepspoc/sde_engine.hpp"

namespace deepspoc {

enum class LossKind { sq, kl, path };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::sq: return "sq";
    case LossKind::kl: return "kl";
    case LossKind::path: return "path";
  }
  return "unknown";
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "sq") return LossKind::sq;
  if (s == "kl") return LossKind::kl;
  if (s == "path") return LossKind::path;
  throw ConfigError("unknown loss '" + s + "' (expected sq, kl or path)");
}

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
  std::size_t clamped = 0;  ///< log evaluations clamped at the floor
};

/// Training points at one time node with their KDE targets and, for
/// importance sampling, the sampling density eta (empty means eta = 1).
struct NodeBatch {
  double t = 0.0;
  Matrix points;
  Vector target;
  Vector eta;
};

inline void check_node(const NodeBatch& b) {
  if (b.points.rows() == 0) throw EmptyBatchError("loss: empty training set at t = " + std::to_string(b.t));
  if (b.target.size() != b.points.rows()) throw DimensionError("loss: KDE table does not match training set");
  if (b.eta.size() != 0 && b.eta.size() != b.points.rows()) {
    throw DimensionError("loss: sampling density does not match training set");
  }
}

/// sum_m (1/|S_m|) sum_x (rho(t_m, x) - rho_hat(x))^2, optionally divided by
/// the node count. The targets are constants.
inline LossResult loss_sq(const DensityModel& model, const std::vector<NodeBatch>& nodes,
                          bool divide_by_nodes = false) {
  LossResult r;
  r.grad.assign(model.num_params(), 0.0);
  const double outer = divide_by_nodes ? 1.0 / static_cast<double>(nodes.size()) : 1.0;
  for (const auto& b : nodes) {
    check_node(b);
    Vector v;
    model.eval(b.t, b.points, v);
    const Vector res = v - b.target;
    const double inv = outer / static_cast<double>(b.points.rows());
    r.value += inv * res.squaredNorm();
    const Vector w = (2.0 * inv) * res;
    model.accumulate_param_grad(b.t, b.points, w, r.grad);
  }
  return r;
}

struct KlOptions {
  double log_floor = 1e-12;
  /// Quadrature for the rectification normaliser of raw models.
  const Quadrature* normalizer_quadrature = nullptr;
};

/// -sum_m (1/N) sum_x (rho_hat(x)/eta(x)) log p(t_m, x). For exact models
/// p is the model density; for raw models p = R(rho) with the log clamped
/// at log_floor. The normaliser gradient enters through the quadrature.
inline LossResult loss_kl(const DensityModel& model, const std::vector<NodeBatch>& nodes,
                          const KlOptions& opt = {}) {
  LossResult r;
  r.grad.assign(model.num_params(), 0.0);
  const bool exact = model.capabilities().exact_density;
  if (!exact && !opt.normalizer_quadrature) {
    throw ConfigError("kl loss on a raw model needs a normaliser quadrature");
  }
  for (const auto& b : nodes) {
    check_node(b);
    const Eigen::Index n = b.points.rows();
    Vector c = b.target / static_cast<double>(n);
    if (b.eta.size() != 0) c = c.cwiseQuotient(b.eta);
    if (exact) {
      Vector logp;
      model.log_eval(b.t, b.points, logp);
      r.value -= c.dot(logp);
      model.accumulate_log_param_grad(b.t, b.points, -c, r.grad);
      continue;
    }
    const Quadrature& q = *opt.normalizer_quadrature;
    Vector raw_q;
    model.eval(b.t, q.points, raw_q);
    const double z = rectify_values(raw_q, q).normalizer;
    Vector raw;
    model.eval(b.t, b.points, raw);
    Vector w = Vector::Zero(n);
    double c_free = 0.0;
    const Box& box = model.domain();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (c(i) == 0.0) continue;
      const double p = rectified_value(raw(i), z, box, b.points.row(i).data());
      if (p < opt.log_floor) {
        ++r.clamped;
        r.value -= c(i) * std::log(opt.log_floor);
        continue;
      }
      r.value -= c(i) * std::log(p);
      w(i) = -c(i) / raw(i);
      c_free += c(i);
    }
    model.accumulate_param_grad(b.t, b.points, w, r.grad);
    if (c_free != 0.0) {
      // d log Z = (1/Z) sum_q w_q 1[rho_q > 0] d rho_q
      Vector wq = Vector::Zero(raw_q.size());
      for (Eigen::Index i = 0; i < raw_q.size(); ++i) {
        if (raw_q(i) > 0.0) wq(i) = c_free * q.weights(i) / z;
      }
      model.accumulate_param_grad(b.t, q.points, wq, r.grad);
    }
  }
  return r;
}

/// -sum_m (1/K) sum_i log p(t_m, X^i_{t_m}) on the simulated paths.
inline LossResult loss_path(const DensityModel& model, const TrajectoryEnsemble& ens) {
  if (!model.capabilities().exact_density) {
    throw CapabilityError("path loss needs a model with an exact density");
  }
  LossResult r;
  r.grad.assign(model.num_params(), 0.0);
  for (std::size_t m = 0; m < ens.nodes(); ++m) {
    const Matrix& x = ens.positions[m];
    const double t = ens.grid.time(m);
    Vector logp;
    model.log_eval(t, x, logp);
    for (Eigen::Index i = 0; i < logp.size(); ++i) {
      if (!std::isfinite(logp(i))) {
        throw NumericError("path loss: non-finite log density for particle " + std::to_string(i) +
                           " at time node " + std::to_string(m));
      }
    }
    const double inv = 1.0 / static_cast<double>(x.rows());
    r.value -= inv * logp.sum();
    model.accumulate_log_param_grad(t, x, Vector::Constant(x.rows(), -inv), r.grad);
  }
  return r;
}

}  // namespace deepspoc
