#pragma once

// Adam with bias correction and the step learning-rate schedule.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepspoc/error.hpp"

namespace deepspoc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// One Adam update of `params` at learning rate `lr`. Nothing is modified if
/// any gradient entry is non-finite.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
                      double lr, const AdamConfig& cfg = {}) {
  if (grad.size() != params.size()) throw DimensionError("adam: gradient length differs from parameters");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state shape differs from parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

enum class ScheduleKind { step, harmonic };

/// alpha_n = alpha0 * gamma^floor(n / Gamma) (step) or alpha0 / n (harmonic).
struct Schedule {
  double alpha0 = 1e-3;
  double gamma = 0.5;
  std::size_t step_size = 500;
  ScheduleKind kind = ScheduleKind::step;

  void validate() const {
    if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw ConfigError("schedule: alpha0 must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("schedule: gamma must lie in (0, 1]");
    if (step_size == 0) throw ConfigError("schedule: step size Gamma must be at least 1");
  }

  double rate(std::size_t n) const {
    if (kind == ScheduleKind::harmonic) return n == 0 ? alpha0 : alpha0 / static_cast<double>(n);
    return alpha0 * std::pow(gamma, static_cast<double>(n / step_size));
  }

  bool operator==(const Schedule&) const = default;
};

}  // namespace deepspoc
