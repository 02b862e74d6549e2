#pragma once

// Benchmark mean-field problems: porous medium (SDE and deterministic
// particle forms), Keller-Segel, Curie-Weiss, fractional porous medium and a
// linear test problem.

#include <atomic>
#include <cmath>
#include <memory>
#include <string>

#include "deepspoc/error.hpp"
#include "deepspoc/measure_view.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/types.hpp"

namespace deepspoc {

// ---------------------------------------------------------------- Barenblatt

struct BarenblattParams {
  double m = 3.0;
  double C = std::sqrt(3.0) / 15.0;
  std::size_t d = 1;

  void validate() const {
    if (!(m > 1.0)) throw InvalidParameter("Barenblatt exponent m must exceed 1");
    if (!(C > 0.0)) throw InvalidParameter("Barenblatt constant C must be positive");
    if (d == 0) throw DimensionError("Barenblatt dimension must be positive");
  }

  double alpha() const {
    const double dd = static_cast<double>(d);
    return dd / (dd * (m - 1.0) + 2.0);
  }
  double beta() const { return alpha() / static_cast<double>(d); }
  /// (m-1)/(2m) * beta, the coefficient of |x|^2 / t^{2 beta}.
  double a() const { return (m - 1.0) / (2.0 * m) * beta(); }

  /// Support radius at time t.
  double radius(double t) const { return std::sqrt(C / a()) * std::pow(t, beta()); }

  /// c0 = integral of U(t, .), independent of t.
  double c0() const {
    const double p = 1.0 / (m - 1.0);
    const double h = 0.5 * static_cast<double>(d);
    return std::pow(C, p + h) * std::pow(a(), -h) * std::pow(kPi, h) * std::tgamma(p + 1.0) /
           std::tgamma(p + 1.0 + h);
  }

  double nu() const { return std::pow(c0(), m - 1.0); }
};

/// U_{m,C}(t, x) = t^{-alpha} [(C - (m-1)/(2m) beta |x|^2 / t^{2 beta})_+]^{1/(m-1)}.
inline double barenblatt_eval(const BarenblattParams& p, double t, const double* x) {
  if (!(t > 0.0)) throw InvalidParameter("Barenblatt solution needs t > 0");
  double r2 = 0.0;
  for (std::size_t k = 0; k < p.d; ++k) r2 += x[k] * x[k];
  const double inner = p.C - p.a() * r2 / std::pow(t, 2.0 * p.beta());
  if (inner <= 0.0) return 0.0;
  return std::pow(t, -p.alpha()) * std::pow(inner, 1.0 / (p.m - 1.0));
}

/// One draw from U(t, .)/c0: rejection from the uniform law on the support ball.
inline void barenblatt_sample(const BarenblattParams& p, double t, CounterRng& rng, double* out) {
  const std::size_t d = p.d;
  const double expo = 1.0 / (p.m - 1.0);
  const double scale = p.radius(t);
  for (;;) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      out[k] = rng.normal();
      norm += out[k] * out[k];
    }
    norm = std::sqrt(norm);
    const double r = std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    const double accept = std::pow(1.0 - r * r, expo);
    if (rng.uniform() < accept) {
      for (std::size_t k = 0; k < d; ++k) out[k] *= scale * r / norm;
      return;
    }
  }
}

/// sqrt(2 nu) rho^{(m-1)/2}.
inline double pme_sigma(double rho, double m, double nu) {
  if (rho < 0.0) throw InvalidParameter("pme_sigma needs a nonnegative density");
  if (rho == 0.0) return 0.0;
  return std::sqrt(2.0 * nu) * std::pow(rho, 0.5 * (m - 1.0));
}

/// Velocity of the deterministic particle form of d_t rho = nu Lap rho^m:
/// -nu m rho^{m-2} grad rho, written to out[0..d).
inline void pme_ode_drift(double rho, const double* grad, std::size_t d, double m, double nu, double* out) {
  if (rho < 0.0) throw InvalidParameter("pme_ode_drift needs a nonnegative density");
  const double f = rho > 0.0 ? -nu * m * std::pow(rho, m - 2.0) : 0.0;
  for (std::size_t k = 0; k < d; ++k) out[k] = f * grad[k];
}

struct PmeOptions {
  BarenblattParams params;
  double t0 = 1.0;
  bool deterministic = false;  ///< particle ODE instead of the SDE
};

inline ProblemSpec pme_problem(const PmeOptions& opt) {
  opt.params.validate();
  if (!(opt.t0 > 0.0)) throw InvalidParameter("PME start time must be positive");
  const BarenblattParams p = opt.params;
  const double nu = p.nu();
  const double c0 = p.c0();
  ProblemSpec s;
  s.name = opt.deterministic ? "pme_ode" : "pme";
  s.dim = p.d;
  s.noise = opt.deterministic ? NoiseKind::none : NoiseKind::brownian;
  const bool ode = opt.deterministic;
  s.coefficients = [p, nu, ode](const StepContext& ctx, const Matrix& x, const MeasureView& mu, Matrix& drift,
                                SigmaField& sigma) {
    Vector rho;
    mu.density(ctx.t, x, rho);
    sigma.mode = SigmaField::Mode::scalar;
    if (ode) {
      Matrix g;
      mu.density_gradient(ctx.t, x, g);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        pme_ode_drift(std::max(rho(i), 0.0), g.row(i).data(), p.d, p.m, nu, drift.row(i).data());
      }
      sigma.scalar = Vector::Zero(x.rows());
      return;
    }
    drift.setZero();
    sigma.scalar.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) sigma.scalar(i) = pme_sigma(std::max(rho(i), 0.0), p.m, nu);
  };
  const double t0 = opt.t0;
  s.initial_sample = [p, t0](CounterRng& rng, double* out) { barenblatt_sample(p, t0, rng, out); };
  s.initial_density = [p, t0, c0](const double* x) { return barenblatt_eval(p, t0, x) / c0; };
  s.reference = [p](double t, const double* x) { return barenblatt_eval(p, t, x); };
  s.reference_scale = c0;
  return s;
}

// ------------------------------------------------------------- Keller-Segel

struct KellerSegelParams {
  std::size_t d = 2;
  std::size_t n_g = 500;
  double delta_cut = 1e-3;
  bool per_particle = false;  ///< fresh convolution samples for every particle
  enum class Initial { gaussian, mixture } initial = Initial::gaussian;

  void validate() const {
    if (d < 2) throw DimensionError("Keller-Segel kernel needs d >= 2");
    if (n_g == 0) throw InvalidParameter("Keller-Segel needs N_g >= 1");
    if (!(delta_cut > 0.0)) throw InvalidParameter("Keller-Segel clamp must be positive");
  }

  /// C_d = 1/(d(d-2) alpha_d), d >= 3.
  double c_d() const {
    const double dd = static_cast<double>(d);
    return 1.0 / (dd * (dd - 2.0) * unit_ball_volume(d));
  }
};

/// grad W(x): x/(2 pi |x|^2) for d = 2, C_d (d-2) x/|x|^d for d >= 3. For
/// 0 < |x| < delta_cut the norm is clamped to delta_cut along x; grad W(0) = 0.
/// Returns true when the clamp was applied.
inline bool ks_grad_w(const KellerSegelParams& p, const double* x, double* out) {
  const std::size_t d = p.d;
  double r2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) r2 += x[k] * x[k];
  double r = std::sqrt(r2);
  if (r == 0.0) {
    for (std::size_t k = 0; k < d; ++k) out[k] = 0.0;
    return true;
  }
  const bool clamped = r < p.delta_cut;
  // Direction x/r times the radial profile evaluated at max(r, delta_cut).
  const double reff = clamped ? p.delta_cut : r;
  double radial;
  if (d == 2) {
    radial = 1.0 / (2.0 * kPi * reff);
  } else {
    radial = p.c_d() * (static_cast<double>(d) - 2.0) / std::pow(reff, static_cast<double>(d) - 1.0);
  }
  for (std::size_t k = 0; k < d; ++k) out[k] = radial * x[k] / r;
  return clamped;
}

/// -(1/N) sum_i w_i grad W(x - y_i) over a weighted cloud (weights sum to 1).
inline void ks_convolution(const KellerSegelParams& p, const double* x, const Matrix& cloud,
                           const Vector* weights, double* out, std::size_t* clamps = nullptr) {
  const std::size_t d = p.d;
  std::vector<double> diff(d), g(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = 0.0;
  const double uniform = 1.0 / static_cast<double>(cloud.rows());
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - cloud(i, static_cast<Eigen::Index>(k));
    if (ks_grad_w(p, diff.data(), g.data()) && clamps) ++*clamps;
    const double w = weights ? (*weights)(i) : uniform;
    for (std::size_t k = 0; k < d; ++k) out[k] -= w * g[k];
  }
}

/// Second-moment slope d/dt E|X_t|^2 of the 2D Keller-Segel solution: 4(1 - 1/(8 pi)).
inline double ks_second_moment_slope() { return 4.0 * (1.0 - 1.0 / (8.0 * kPi)); }

struct KellerSegelProblem {
  ProblemSpec spec;
  std::shared_ptr<std::atomic<std::size_t>> clamps;
};

inline KellerSegelProblem keller_segel_problem(const KellerSegelParams& params) {
  params.validate();
  const KellerSegelParams p = params;
  KellerSegelProblem out;
  out.clamps = std::make_shared<std::atomic<std::size_t>>(0);
  auto clamps = out.clamps;
  ProblemSpec& s = out.spec;
  s.name = p.initial == KellerSegelParams::Initial::gaussian ? "ks_gauss" : "ks_mix";
  s.dim = p.d;
  s.noise = NoiseKind::brownian;
  s.coefficients = [p, clamps](const StepContext& ctx, const Matrix& x, const MeasureView& mu, Matrix& drift,
                               SigmaField& sigma) {
    sigma = SigmaField::constant(static_cast<std::size_t>(x.rows()), std::sqrt(2.0));
    const Matrix* atoms = mu.atoms(ctx.t);
    std::size_t local = 0;
    if (atoms) {
      const Vector* w = mu.atom_weights(ctx.t);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        ks_convolution(p, x.row(i).data(), *atoms, w, drift.row(i).data(), &local);
      }
    } else if (!p.per_particle) {
      CounterRng rng(ctx.seed, ctx.epoch, Lane::model_samples, 0, ctx.node);
      const Matrix cloud = mu.sample(ctx.t, p.n_g, rng);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        ks_convolution(p, x.row(i).data(), cloud, nullptr, drift.row(i).data(), &local);
      }
    } else {
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        CounterRng rng(ctx.seed, ctx.epoch, Lane::per_particle_samples, static_cast<std::uint64_t>(i), ctx.node);
        const Matrix cloud = mu.sample(ctx.t, p.n_g, rng);
        ks_convolution(p, x.row(i).data(), cloud, nullptr, drift.row(i).data(), &local);
      }
    }
    *clamps += local;
  };
  const bool mixture = p.initial == KellerSegelParams::Initial::mixture;
  const std::size_t d = p.d;
  const double sd = std::sqrt(0.18);
  s.initial_sample = [mixture, d, sd](CounterRng& rng, double* out) {
    double shift = 0.0;
    if (mixture) shift = rng.uniform() < 1.0 / 3.0 ? -1.5 : 1.0;
    for (std::size_t k = 0; k < d; ++k) out[k] = sd * rng.normal();
    out[0] += shift;
  };
  if (d == 2) {
    s.initial_density = [mixture](const double* x) {
      auto g = [](double a, double b) { return std::exp(-(a * a + b * b) / 0.36) / (0.36 * kPi); };
      if (!mixture) return g(x[0], x[1]);
      return g(x[0] + 1.5, x[1]) / 3.0 + 2.0 * g(x[0] - 1.0, x[1]) / 3.0;
    };
  }
  return out;
}

// ------------------------------------------------------------ Curie-Weiss

struct CurieWeissParams {
  double beta = 1.0;
  double coupling = -0.1;  ///< K in the drift
  std::size_t mean_samples = 100;

  /// Integral of exp(-2 beta (x^4/4 - x^2/2)) by composite Simpson on [-8, 8].
  double normalizer() const {
    const int n = 20000;
    const double a = -8.0, b = 8.0, h = (b - a) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = a + h * i;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * std::exp(-2.0 * beta * (0.25 * x * x * x * x - 0.5 * x * x));
    }
    return acc * h / 3.0;
  }
};

/// -beta (x^3 - x) + beta K m_hat.
inline double cw_drift(const CurieWeissParams& p, double x, double mean) {
  return -p.beta * (x * x * x - x) + p.beta * p.coupling * mean;
}

inline double cw_invariant_unnormalized(const CurieWeissParams& p, double x) {
  return std::exp(-2.0 * p.beta * (0.25 * x * x * x * x - 0.5 * x * x));
}

inline double cw_invariant_density(const CurieWeissParams& p, double x, double normalizer) {
  return cw_invariant_unnormalized(p, x) / normalizer;
}

/// Mean of mu_t: exact over atoms when available, otherwise from n model
/// samples keyed by the step context.
inline Vector measure_mean(const MeasureView& mu, const StepContext& ctx, std::size_t n) {
  if (const Matrix* atoms = mu.atoms(ctx.t)) {
    if (const Vector* w = mu.atom_weights(ctx.t)) return (atoms->transpose() * *w) / w->sum();
    return atoms->colwise().mean().transpose();
  }
  CounterRng rng(ctx.seed, ctx.epoch, Lane::model_samples, 0, ctx.node);
  const Matrix s = mu.sample(ctx.t, n, rng);
  return s.colwise().mean().transpose();
}

inline ProblemSpec curie_weiss_problem(const CurieWeissParams& params) {
  const CurieWeissParams p = params;
  ProblemSpec s;
  s.name = "curie_weiss";
  s.dim = 1;
  s.noise = NoiseKind::brownian;
  s.coefficients = [p](const StepContext& ctx, const Matrix& x, const MeasureView& mu, Matrix& drift,
                       SigmaField& sigma) {
    const double mean = measure_mean(mu, ctx, p.mean_samples)(0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) drift(i, 0) = cw_drift(p, x(i, 0), mean);
    sigma = SigmaField::constant(static_cast<std::size_t>(x.rows()), 1.0);
  };
  s.initial_sample = [](CounterRng& rng, double* out) { out[0] = 1.0 + rng.normal(); };
  s.initial_density = [](const double* x) {
    const double z = x[0] - 1.0;
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
  };
  return s;
}

// --------------------------------------------------- fractional porous medium

/// rho^{(m-1)/alpha}.
inline double fpme_sigma(double rho, double m, double alpha) {
  if (rho < 0.0) throw InvalidParameter("fpme_sigma needs a nonnegative density");
  if (rho == 0.0) return 0.0;
  return std::pow(rho, (m - 1.0) / alpha);
}

struct FpmeOptions {
  std::size_t d = 1;
  double alpha = 1.0;
  double m = 2.0;
  BarenblattParams initial{2.0, std::sqrt(3.0) / 15.0, 1};  ///< mu_0 = U(t0, .)/c0
  double t0 = 1.0;
};

inline ProblemSpec fpme_problem(const FpmeOptions& opt) {
  if (!(opt.alpha > 0.0 && opt.alpha < 2.0)) throw InvalidParameter("FPME alpha must lie in (0, 2)");
  if (!(opt.m > 1.0)) throw InvalidParameter("FPME m must exceed 1");
  if (opt.initial.d != opt.d) throw DimensionError("FPME initial law dimension mismatch");
  opt.initial.validate();
  ProblemSpec s;
  s.name = "fpme";
  s.dim = opt.d;
  s.noise = NoiseKind::alpha_stable;
  s.stable_alpha = opt.alpha;
  const double m = opt.m, alpha = opt.alpha;
  s.coefficients = [m, alpha](const StepContext& ctx, const Matrix& x, const MeasureView& mu, Matrix& drift,
                              SigmaField& sigma) {
    Vector rho;
    mu.density(ctx.t, x, rho);
    drift.setZero();
    sigma.mode = SigmaField::Mode::scalar;
    sigma.scalar.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) sigma.scalar(i) = fpme_sigma(std::max(rho(i), 0.0), m, alpha);
  };
  const BarenblattParams b = opt.initial;
  const double t0 = opt.t0;
  const double c0 = b.c0();
  s.initial_sample = [b, t0](CounterRng& rng, double* out) { barenblatt_sample(b, t0, rng, out); };
  s.initial_density = [b, t0, c0](const double* x) { return barenblatt_eval(b, t0, x) / c0; };
  return s;
}

// ---------------------------------------------------------- linear problem

/// dX = (-X + E X) dt + dB in 1D with mu_0 = N(0, 1); (b, sigma) is
/// Lipschitz with constant 1.
inline ProblemSpec linear_problem(std::size_t mean_samples = 100) {
  ProblemSpec s;
  s.name = "linear";
  s.dim = 1;
  s.noise = NoiseKind::brownian;
  s.lipschitz = 1.0;
  s.coefficients = [mean_samples](const StepContext& ctx, const Matrix& x, const MeasureView& mu, Matrix& drift,
                                  SigmaField& sigma) {
    const double mean = measure_mean(mu, ctx, mean_samples)(0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) drift(i, 0) = -x(i, 0) + mean;
    sigma = SigmaField::constant(static_cast<std::size_t>(x.rows()), 1.0);
  };
  s.initial_sample = [](CounterRng& rng, double* out) { out[0] = rng.normal(); };
  s.initial_density = [](const double* x) { return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2.0 * kPi); };
  return s;
}

}  // namespace deepspoc
