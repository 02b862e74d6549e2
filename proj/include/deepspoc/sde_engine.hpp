#pragma once

// Time grids, noise increments and the Euler-Maruyama batch simulator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deepspoc/error.hpp"
#include "deepspoc/measure_view.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

/// Uniform grid t0 < t0 + dt < ... < t0 + T with M steps.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t0, double horizon, std::size_t steps)
      : t0_(t0), horizon_(horizon), steps_(steps) {
    if (steps == 0) throw InvalidParameter("time grid needs at least one step");
    if (!(horizon > 0.0) || !std::isfinite(horizon) || !std::isfinite(t0)) {
      throw InvalidParameter("time grid horizon must be positive and finite");
    }
  }

  /// Grid with step dt covering [t0, t0 + horizon]; horizon/dt is rounded.
  static TimeGrid with_step(double t0, double horizon, double dt) {
    if (!(dt > 0.0)) throw InvalidParameter("time step must be positive");
    const double ratio = horizon / dt;
    const auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (steps == 0 || std::abs(ratio - static_cast<double>(steps)) > 1e-6 * ratio) {
      throw InvalidParameter("horizon must be an integer multiple of dt");
    }
    return TimeGrid(t0, horizon, steps);
  }

  double t0() const { return t0_; }
  double horizon() const { return horizon_; }
  double t_end() const { return t0_ + horizon_; }
  std::size_t steps() const { return steps_; }
  std::size_t nodes() const { return steps_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(steps_); }
  double time(std::size_t m) const { return t0_ + static_cast<double>(m) * dt(); }

  /// Index of the node closest to t (clamped to the grid).
  std::size_t nearest_node(double t) const {
    const double r = (t - t0_) / dt();
    if (r <= 0.0) return 0;
    const auto m = static_cast<std::size_t>(std::llround(r));
    return std::min(m, steps_);
  }

  bool operator==(const TimeGrid&) const = default;

 private:
  double t0_ = 0.0;
  double horizon_ = 1.0;
  std::size_t steps_ = 1;
};

struct NoiseSource {
  NoiseKind kind = NoiseKind::brownian;
  double alpha = 2.0;  ///< stability index for alpha_stable
  std::size_t dim = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == NoiseKind::alpha_stable && !(alpha > 0.0 && alpha < 2.0)) {
      throw InvalidParameter("alpha-stable index must lie in (0, 2)");
    }
    if (dim == 0) throw DimensionError("noise dimension must be positive");
  }
};

/// Symmetric alpha-stable variate with characteristic function exp(-|s|^alpha)
/// from a uniform u in (0,1) and a unit exponential w (Chambers-Mallows-Stuck).
inline double stable_from_uniform(double alpha, double u, double w) {
  const double v = kPi * (u - 0.5);
  if (alpha == 1.0) return std::tan(v);
  const double a = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha);
  const double b = std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
  return a * b;
}

inline double standard_stable(double alpha, CounterRng& rng) {
  const double u = rng.uniform_open();
  const double w = alpha == 1.0 ? 1.0 : rng.exponential();
  return stable_from_uniform(alpha, u, w);
}

/// Writes one increment over a step dt into out[0..dim).
inline void draw_increment(const NoiseSource& src, double dt, CounterRng& rng, double* out) {
  switch (src.kind) {
    case NoiseKind::none:
      for (std::size_t k = 0; k < src.dim; ++k) out[k] = 0.0;
      return;
    case NoiseKind::brownian: {
      const double s = std::sqrt(dt);
      for (std::size_t k = 0; k < src.dim; ++k) out[k] = s * rng.normal();
      return;
    }
    case NoiseKind::alpha_stable: {
      const double s = std::pow(dt, 1.0 / src.alpha);
      for (std::size_t k = 0; k < src.dim; ++k) out[k] = s * standard_stable(src.alpha, rng);
      return;
    }
  }
}

/// n x d matrix of increments over dt. Row i uses the stream
/// (seed, call_index, i), so the result is a pure function of its arguments.
inline Matrix sample_increment(const NoiseSource& src, double dt, std::size_t n,
                               std::uint64_t call_index = 0) {
  src.validate();
  if (!(dt > 0.0)) throw InvalidParameter("increment step dt must be positive");
  if (n == 0) throw InvalidParameter("increment count must be at least 1");
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(src.dim));
  parallel_for(n, [&](std::size_t i) {
    CounterRng rng(src.seed, call_index, Lane::increment, i, 0);
    draw_increment(src, dt, rng, out.row(static_cast<Eigen::Index>(i)).data());
  });
  return out;
}

/// Positions of K particles at every node of a grid.
struct TrajectoryEnsemble {
  TimeGrid grid;
  std::size_t particles = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::vector<Matrix> positions;  ///< positions[m] is K x d

  const Matrix& at(std::size_t m) const { return positions.at(m); }
  std::size_t nodes() const { return positions.size(); }
};

/// One explicit step x + b dt + sigma dZ.
inline Matrix euler_step(const Matrix& x, double dt, const Matrix& drift, const SigmaField& sigma,
                         const Matrix& dz) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (drift.rows() != n || drift.cols() != d || dz.rows() != n || dz.cols() != d) {
    throw DimensionError("euler_step: position, drift and increment shapes differ");
  }
  Matrix out = x + dt * drift;
  if (sigma.mode == SigmaField::Mode::scalar) {
    if (sigma.scalar.size() != n) throw DimensionError("euler_step: sigma length mismatch");
    out.array() += dz.array().colwise() * sigma.scalar.array();
  } else {
    if (static_cast<Eigen::Index>(sigma.matrix.size()) != n) {
      throw DimensionError("euler_step: sigma matrix count mismatch");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = sigma.matrix[static_cast<std::size_t>(i)];
      if (s.rows() != d || s.cols() != d) throw DimensionError("euler_step: sigma matrix shape");
      out.row(i) += (s * dz.row(i).transpose()).transpose();
    }
  }
  return out;
}

struct SimulationOptions {
  /// Negate initial points and increments (mirror image of the same run).
  bool mirror = false;
  /// Replaces the random increments when set: fn(node m, particle i, out).
  std::function<void(std::size_t, std::size_t, double*)> increment_override;
  /// Replaces the initial draws when set (K x d).
  std::optional<Matrix> initial_positions;
};

/// Draws the K initial points of an epoch from mu_0.
inline Matrix sample_initial(const ProblemSpec& problem, std::size_t n, std::uint64_t seed,
                             std::uint64_t epoch, bool mirror = false) {
  if (!problem.initial_sample) throw ConfigError("problem '" + problem.name + "' has no initial sampler");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(problem.dim));
  parallel_for(n, [&](std::size_t i) {
    CounterRng rng(seed, epoch, Lane::initial, i, 0);
    problem.initial_sample(rng, x.row(static_cast<Eigen::Index>(i)).data());
  });
  if (mirror) x = -x;
  return x;
}

inline void check_finite_positions(const Matrix& x, std::size_t node) {
  if (x.allFinite()) return;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).allFinite()) throw BlowUpError(static_cast<std::size_t>(i), node);
  }
}

/// Advances positions from node m-1 to node m given mu_{t_{m-1}}.
inline Matrix advance_particles(const ProblemSpec& problem, const MeasureView& mu,
                                const TimeGrid& grid, const Matrix& x, std::size_t m,
                                std::uint64_t seed, std::uint64_t epoch,
                                const SimulationOptions& options = {}) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const double dt = grid.dt();
  StepContext ctx{grid.time(m - 1), m - 1, seed, epoch};
  Matrix drift = Matrix::Zero(x.rows(), x.cols());
  SigmaField sigma;
  problem.coefficients(ctx, x, mu, drift, sigma);

  NoiseSource src{problem.noise, problem.stable_alpha, problem.dim, seed};
  Matrix dz(x.rows(), x.cols());
  parallel_for(n, [&](std::size_t i) {
    double* row = dz.row(static_cast<Eigen::Index>(i)).data();
    if (options.increment_override) {
      options.increment_override(m, i, row);
      return;
    }
    CounterRng rng(seed, epoch, Lane::increment, i, m);
    draw_increment(src, dt, rng, row);
    if (options.mirror) {
      for (std::size_t k = 0; k < problem.dim; ++k) row[k] = -row[k];
    }
  });
  Matrix next = euler_step(x, dt, drift, sigma, dz);
  check_finite_positions(next, m);
  return next;
}

/// Simulates K particles over the grid with mu frozen (read-only).
inline TrajectoryEnsemble simulate_batch(const ProblemSpec& problem, const MeasureView& mu,
                                         const TimeGrid& grid, std::size_t particles,
                                         std::uint64_t seed, std::uint64_t epoch = 0,
                                         const SimulationOptions& options = {}) {
  if (particles == 0) throw EmptyBatchError("simulate_batch: particle count K must be positive");
  if (!problem.coefficients) throw ConfigError("problem '" + problem.name + "' has no coefficients");
  TrajectoryEnsemble ens;
  ens.grid = grid;
  ens.particles = particles;
  ens.dim = problem.dim;
  ens.seed = seed;
  ens.epoch = epoch;
  ens.positions.reserve(grid.nodes());
  if (options.initial_positions) {
    const Matrix& x0 = *options.initial_positions;
    if (x0.rows() != static_cast<Eigen::Index>(particles) ||
        x0.cols() != static_cast<Eigen::Index>(problem.dim)) {
      throw DimensionError("simulate_batch: initial positions have the wrong shape");
    }
    ens.positions.push_back(options.mirror ? Matrix(-x0) : x0);
  } else {
    ens.positions.push_back(sample_initial(problem, particles, seed, epoch, options.mirror));
  }
  check_finite_positions(ens.positions.back(), 0);
  for (std::size_t m = 1; m < grid.nodes(); ++m) {
    ens.positions.push_back(
        advance_particles(problem, mu, grid, ens.positions.back(), m, seed, epoch, options));
  }
  return ens;
}

/// Debug dump: header epoch,m,t,i,x0..x{d-1}; one row per (node, particle).
inline void write_trajectory_csv(std::ostream& os, const TrajectoryEnsemble& ens) {
  os << "epoch,m,t,i";
  for (std::size_t k = 0; k < ens.dim; ++k) os << ",x" << k;
  os << '\n';
  os.precision(17);
  for (std::size_t m = 0; m < ens.nodes(); ++m) {
    const Matrix& x = ens.positions[m];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      os << ens.epoch << ',' << m << ',' << ens.grid.time(m) << ',' << i;
      for (Eigen::Index k = 0; k < x.cols(); ++k) os << ',' << x(i, k);
      os << '\n';
    }
  }
}

}  // namespace deepspoc
