#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "test_support.hpp"

using namespace deepspoc;
using testing_support::ks_distance;

namespace {

/// Measure view given by closed-form density and gradient functions.
class FunctionView final : public MeasureView {
 public:
  using Density = std::function<double(const double*)>;
  using Gradient = std::function<void(const double*, double*)>;

  FunctionView(std::size_t d, Density f, Gradient g = {}) : d_(d), f_(std::move(f)), g_(std::move(g)) {}

  std::size_t dim() const override { return d_; }
  void density(double, const Matrix& x, Vector& out) const override {
    out.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector row = x.row(i).transpose();
      out(i) = f_(row.data());
    }
  }
  void density_gradient(double, const Matrix& x, Matrix& out) const override {
    out.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector row = x.row(i).transpose();
      Vector g(x.cols());
      g_(row.data(), g.data());
      out.row(i) = g.transpose();
    }
  }
  Matrix sample(double, std::size_t, CounterRng&) const override {
    throw CapabilityError("function view cannot be sampled");
  }

 private:
  std::size_t d_;
  Density f_;
  Gradient g_;
};

BarenblattParams preset_pme(std::size_t d) { return BarenblattParams{3.0, std::sqrt(3.0) / 15.0, d}; }

/// Integral of U(t, .) over R^d by the radial midpoint rule.
double radial_mass(const BarenblattParams& p, double t, std::size_t n) {
  const double r_max = p.radius(t);
  const double h = r_max / static_cast<double>(n);
  std::vector<double> x(p.d, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (static_cast<double>(i) + 0.5) * h;
    x[0] = r;
    acc += std::pow(r, static_cast<double>(p.d) - 1.0) * barenblatt_eval(p, t, x.data());
  }
  return unit_sphere_area(p.d) * acc * h;
}

void coefficients(const ProblemSpec& p, const MeasureView& mu, double t, const Matrix& x, Matrix& drift,
                  SigmaField& sigma) {
  drift = Matrix::Zero(x.rows(), x.cols());
  p.coefficients(StepContext{t, 0, 1, 0}, x, mu, drift, sigma);
}

}  // namespace

// --------------------------------------------------------------- Barenblatt

TEST(Barenblatt, Exponents) {
  const BarenblattParams p = preset_pme(1);
  EXPECT_DOUBLE_EQ(p.alpha(), 0.25);
  EXPECT_DOUBLE_EQ(p.beta(), 0.25);
  EXPECT_DOUBLE_EQ(p.a(), 1.0 / 12.0);
  const BarenblattParams q = preset_pme(3);
  EXPECT_DOUBLE_EQ(q.alpha(), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(q.beta(), 1.0 / 8.0);
}

TEST(Barenblatt, ValueAtOriginAndSupportEdge) {
  const BarenblattParams p = preset_pme(1);
  double x = 0.0;
  EXPECT_NEAR(barenblatt_eval(p, 1.0, &x), std::sqrt(std::sqrt(3.0) / 15.0), 1e-15);
  EXPECT_NEAR(barenblatt_eval(p, 1.0, &x), 0.339809, 1e-6);
  x = std::sqrt(4.0 * std::sqrt(3.0) / 5.0);
  EXPECT_EQ(barenblatt_eval(p, 1.0, &x), 0.0);
  x = -1.2;
  EXPECT_EQ(barenblatt_eval(p, 1.0, &x), 0.0);
  x = 1.17;
  EXPECT_GT(barenblatt_eval(p, 1.0, &x), 0.0);
  EXPECT_NEAR(p.radius(1.0) * p.radius(1.0), 4.0 * std::sqrt(3.0) / 5.0, 1e-14);
  EXPECT_THROW(barenblatt_eval(p, 0.0, &x), InvalidParameter);
}

TEST(Barenblatt, NormalizerMatchesDenseQuadrature) {
  const BarenblattParams p = preset_pme(1);
  const double r = p.radius(1.0);
  const std::size_t n = 1000000;
  const double h = 2.0 * r / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -r + (static_cast<double>(i) + 0.5) * h;
    acc += barenblatt_eval(p, 1.0, &x);
  }
  acc *= h;
  EXPECT_NEAR(p.c0(), acc, 1e-6 * acc);
  EXPECT_NEAR(p.c0(), 0.628319, 1e-6);
  EXPECT_NEAR(p.nu(), p.c0() * p.c0(), 1e-15);
}

TEST(Barenblatt, MassIsConservedInTime) {
  for (std::size_t d : {1u, 3u, 5u}) {
    const BarenblattParams p = preset_pme(d);
    for (double t0 : {0.1, 1.0}) {
      const double a = radial_mass(p, t0, 400000);
      const double b = radial_mass(p, t0 + 1.0, 400000);
      EXPECT_NEAR(a, b, 1e-5 * a) << "d=" << d;
      EXPECT_NEAR(a, p.c0(), 1e-5 * a) << "d=" << d;
    }
  }
}

TEST(Barenblatt, NormalizedProfileIsFixedByRectification) {
  const BarenblattParams p = preset_pme(1);
  const double c0 = p.c0();
  RectifyOptions opt;
  opt.scan_per_axis = 20000;
  const Rectified r([&](const double* x) { return barenblatt_eval(p, 2.0, x) / c0; }, Box::cube(1, 2.0), opt);
  EXPECT_NEAR(r.normalizer(), 1.0, 1e-6);
  for (double x : {-1.0, -0.3, 0.0, 0.8}) EXPECT_NEAR(r(&x), barenblatt_eval(p, 2.0, &x) / c0, 1e-6);
}

TEST(Barenblatt, SamplerFollowsProfile) {
  const BarenblattParams p = preset_pme(1);
  CounterRng rng(12);
  std::vector<double> xs(50000);
  for (double& x : xs) barenblatt_sample(p, 1.0, rng, &x);
  const double r = p.radius(1.0);
  const auto semicircle = [r](double x) {
    const double u = std::clamp(x / r, -1.0, 1.0);
    return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / kPi;
  };
  EXPECT_LT(ks_distance(xs, semicircle), 0.01);
}

// ----------------------------------------------------------------------- PME

TEST(PmeSigma, Examples) {
  EXPECT_EQ(pme_sigma(0.0, 3.0, 1.0), 0.0);
  EXPECT_NEAR(pme_sigma(0.5, 3.0, 1.0), 0.70711, 1e-5);
  EXPECT_NEAR(pme_sigma(1.0, 2.0, 4.0), 2.8284, 1e-4);
  EXPECT_THROW(pme_sigma(-0.1, 3.0, 1.0), InvalidParameter);
}

TEST(PmeOdeDrift, Examples) {
  double out[2];
  const double zero[2] = {0.0, 0.0};
  pme_ode_drift(0.7, zero, 2, 3.0, 1.5, out);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
  const double g[2] = {0.3, -1.1};
  for (double rho : {0.1, 0.5, 2.0}) {
    pme_ode_drift(rho, g, 2, 2.0, 1.5, out);
    EXPECT_NEAR(out[0], -2.0 * 1.5 * 0.3, 1e-15);
    EXPECT_NEAR(out[1], 2.0 * 1.5 * 1.1, 1e-15);
  }
  EXPECT_THROW(pme_ode_drift(-1.0, g, 2, 2.0, 1.5, out), InvalidParameter);
}

TEST(PmeOdeDrift, SyntheticGaussianProfile) {
  PmeOptions opt;
  opt.params = preset_pme(1);
  opt.deterministic = true;
  const ProblemSpec problem = pme_problem(opt);
  const FunctionView view(
      1, [](const double* x) { return std::exp(-x[0] * x[0]); },
      [](const double* x, double* g) { g[0] = -2.0 * x[0] * std::exp(-x[0] * x[0]); });
  Matrix x(1, 1);
  x(0, 0) = 1.0;
  Matrix drift;
  SigmaField sigma;
  coefficients(problem, view, 1.0, x, drift, sigma);
  const double nu = opt.params.nu(), m = 3.0;
  const double rho = std::exp(-1.0);
  const double analytic = nu * m * std::pow(rho, m - 2.0) * (-2.0 * std::exp(-1.0));
  // Particles move down the density gradient, so the velocity is the negated expression.
  EXPECT_NEAR(drift(0, 0), -analytic, 1e-6);
  EXPECT_EQ(sigma.scalar(0), 0.0);
}

TEST(PmeOdeDrift, ReluModelHasNoSpatialGradient) {
  PmeOptions opt;
  opt.params = preset_pme(1);
  opt.deterministic = true;
  const ProblemSpec problem = pme_problem(opt);
  const TimeGrid grid(1.0, 0.1, 2);
  MlpConfig cfg;
  cfg.hidden = {8};
  cfg.activation = Activation::relu;
  const MlpDensity mlp(Box::cube(1, 2.0), grid, cfg);
  const ModelView view(mlp);
  EXPECT_THROW(simulate_batch(problem, view, grid, 10, 0), CapabilityError);
}

TEST(PmeProblem, SdeCoefficients) {
  PmeOptions opt;
  opt.params = preset_pme(1);
  const ProblemSpec problem = pme_problem(opt);
  const FunctionView view(1, [](const double*) { return 0.5; });
  Matrix x(3, 1);
  x << -0.2, 0.0, 0.4;
  Matrix drift;
  SigmaField sigma;
  coefficients(problem, view, 1.0, x, drift, sigma);
  EXPECT_EQ(drift.cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(sigma.scalar(i), std::sqrt(2.0 * opt.params.nu()) * 0.5, 1e-15);
  }
  EXPECT_NEAR(problem.reference_scale, opt.params.c0(), 1e-15);
  double z = 0.1;
  EXPECT_NEAR(problem.initial_density(&z), barenblatt_eval(opt.params, 1.0, &z) / opt.params.c0(), 1e-15);
}

TEST(PmeProblem, ParticleOdeSpreadsLikeBarenblatt) {
  PmeOptions opt;
  opt.params = preset_pme(1);
  opt.deterministic = true;
  const ProblemSpec problem = pme_problem(opt);
  const TimeGrid grid(1.0, 1.0, 100);
  const PocResult r = baseline_poc(problem, 4000, grid, MollifierSpec(KernelKind::gaussian, 0.05, 1), 3);
  auto variance = [](const Matrix& x) { return (x.array() - x.mean()).square().mean(); };
  const double ratio = variance(r.terminal) / variance(r.ensemble.positions[0]);
  // The variance of U(t, .) scales like t^{2 beta} = t^{1/2}.
  EXPECT_NEAR(ratio, std::sqrt(2.0), 0.05 * std::sqrt(2.0));
}

// ------------------------------------------------------------- Keller-Segel

TEST(KellerSegel, KernelGradientExamples) {
  KellerSegelParams p2;
  double out[3];
  const double e1[2] = {1.0, 0.0};
  EXPECT_FALSE(ks_grad_w(p2, e1, out));
  EXPECT_NEAR(out[0], 1.0 / (2.0 * kPi), 1e-15);
  EXPECT_NEAR(out[0], 0.15915, 1e-5);
  EXPECT_EQ(out[1], 0.0);
  KellerSegelParams p3;
  p3.d = 3;
  EXPECT_NEAR(p3.c_d(), 1.0 / (4.0 * kPi), 1e-15);
  const double e3[3] = {1.0, 0.0, 0.0};
  ks_grad_w(p3, e3, out);
  EXPECT_NEAR(out[0], 0.07958, 1e-5);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 0.0);
}

TEST(KellerSegel, KernelGradientIsOdd) {
  for (std::size_t d : {2u, 3u, 4u}) {
    KellerSegelParams p;
    p.d = d;
    CounterRng rng(d);
    for (int s = 0; s < 500; ++s) {
      double x[4], nx[4], a[4], b[4];
      for (std::size_t k = 0; k < d; ++k) {
        x[k] = rng.normal();
        nx[k] = -x[k];
      }
      ks_grad_w(p, x, a);
      ks_grad_w(p, nx, b);
      for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(a[k], -b[k]);
    }
  }
}

TEST(KellerSegel, ClampPreservesDirection) {
  KellerSegelParams p;
  const double x[2] = {3e-4, -4e-4};
  double out[2];
  EXPECT_TRUE(ks_grad_w(p, x, out));
  const double norm = std::hypot(out[0], out[1]);
  EXPECT_NEAR(norm, 1.0 / (2.0 * kPi * 1e-3), 1e-9);
  EXPECT_NEAR(out[0] / norm, 0.6, 1e-12);
  EXPECT_NEAR(out[1] / norm, -0.8, 1e-12);
  const double zero[2] = {0.0, 0.0};
  EXPECT_TRUE(ks_grad_w(p, zero, out));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(KellerSegel, ConvolutionExamples) {
  KellerSegelParams p;
  const double x[2] = {0.7, -0.2};
  double out[2], g[2];
  ks_grad_w(p, x, g);
  ks_convolution(p, x, Matrix::Zero(1, 2), nullptr, out);
  EXPECT_EQ(out[0], -g[0]);
  EXPECT_EQ(out[1], -g[1]);
  ks_convolution(p, x, Matrix::Zero(25, 2), nullptr, out);
  EXPECT_DOUBLE_EQ(out[0], -g[0]);
  EXPECT_DOUBLE_EQ(out[1], -g[1]);

  Matrix pm(2, 2);
  pm << 0.4, 0.3, -0.4, -0.3;
  const double origin[2] = {0.0, 0.0};
  ks_convolution(p, origin, pm, nullptr, out);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(KellerSegel, ConvolutionMatchesNaiveLoop) {
  KellerSegelParams p;
  CounterRng rng(5);
  Matrix cloud(500, 2);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) cloud.data()[i] = rng.normal();
  for (int s = 0; s < 20; ++s) {
    const double x[2] = {rng.normal(), rng.normal()};
    double out[2];
    ks_convolution(p, x, cloud, nullptr, out);
    double ref[2] = {0.0, 0.0};
    for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
      const double dx = x[0] - cloud(i, 0), dy = x[1] - cloud(i, 1);
      const double r = std::hypot(dx, dy);
      const double denom = 2.0 * kPi * r * std::max(r, 1e-3);
      ref[0] -= dx / denom / 500.0;
      ref[1] -= dy / denom / 500.0;
    }
    EXPECT_NEAR(out[0], ref[0], 1e-12);
    EXPECT_NEAR(out[1], ref[1], 1e-12);
  }
}

TEST(KellerSegel, DriftFromAtomsIsAntisymmetric) {
  KellerSegelParams params;
  const KellerSegelProblem ks = keller_segel_problem(params);
  CounterRng rng(6);
  Matrix cloud(200, 2), x(30, 2);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) cloud.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const MollifierSpec moll(KernelKind::gaussian, 0.1, 2);
  const auto view = EmpiricalView::constant(EmpiricalMeasure(cloud), moll);
  const auto mirrored = EmpiricalView::constant(EmpiricalMeasure(-cloud), moll);
  Matrix a, b;
  SigmaField sa, sb;
  coefficients(ks.spec, view, 0.0, x, a, sa);
  coefficients(ks.spec, mirrored, 0.0, -x, b, sb);
  EXPECT_LT((a + b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(sa.scalar(0), std::sqrt(2.0), 1e-15);

  const auto single = EmpiricalView::constant(EmpiricalMeasure(Matrix::Zero(1, 2)), moll);
  coefficients(ks.spec, single, 0.0, x, a, sa);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double g[2];
    ks_grad_w(params, x.row(i).data(), g);
    EXPECT_EQ(a(i, 0), -g[0]);
    EXPECT_EQ(a(i, 1), -g[1]);
  }
}

TEST(KellerSegel, InitialLaws) {
  KellerSegelParams p;
  const ProblemSpec gauss = keller_segel_problem(p).spec;
  const double origin[2] = {0.0, 0.0};
  EXPECT_NEAR(gauss.initial_density(origin), 1.0 / (0.36 * kPi), 1e-14);
  const Matrix g = sample_initial(gauss, 100000, 3, 0);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double var = (g.col(k).array() - g.col(k).mean()).square().mean();
    EXPECT_NEAR(var, 0.18, 0.005);
  }
  p.initial = KellerSegelParams::Initial::mixture;
  const ProblemSpec mix = keller_segel_problem(p).spec;
  const Matrix m = sample_initial(mix, 100000, 3, 0);
  EXPECT_NEAR(m.col(0).mean(), (-1.5 + 2.0) / 3.0, 0.02);
  EXPECT_NEAR(m.col(1).mean(), 0.0, 0.01);
  EXPECT_THROW(keller_segel_problem(KellerSegelParams{1}), DimensionError);
}

TEST(KellerSegel, SecondMomentSlopeConstant) {
  EXPECT_NEAR(ks_second_moment_slope(), 4.0 - 1.0 / (2.0 * kPi), 1e-15);
}

// --------------------------------------------------------------- Curie-Weiss

TEST(CurieWeiss, DriftExamples) {
  const CurieWeissParams p;
  EXPECT_EQ(cw_drift(p, 0.0, 0.0), 0.0);
  EXPECT_NEAR(cw_drift(p, 1.0, 1.0), -0.1, 1e-15);
  EXPECT_EQ(cw_drift(p, 1.0, 0.0), 0.0);
  EXPECT_EQ(cw_drift(p, -1.0, 0.0), 0.0);
}

TEST(CurieWeiss, InvariantDensity) {
  const CurieWeissParams p;
  EXPECT_EQ(cw_invariant_unnormalized(p, 0.0), 1.0);
  EXPECT_NEAR(cw_invariant_unnormalized(p, 1.0), 1.64872, 1e-5);
  for (double x : {0.1, 0.7, 1.3, 2.9}) {
    EXPECT_EQ(cw_invariant_unnormalized(p, x), cw_invariant_unnormalized(p, -x));
  }
}

TEST(CurieWeiss, NormalizerMatchesDenseQuadrature) {
  const CurieWeissParams p;
  const int n = 1000000;
  const double h = 12.0 / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += cw_invariant_unnormalized(p, -6.0 + (i + 0.5) * h);
  acc *= h;
  EXPECT_NEAR(p.normalizer(), acc, 1e-9 * acc);
  EXPECT_GT(acc, 0.0);
}

TEST(CurieWeiss, UncoupledMeanRelaxes) {
  CurieWeissParams p;
  p.coupling = 0.0;
  const ProblemSpec problem = curie_weiss_problem(p);
  Matrix cloud(2000, 1);
  CounterRng rng(7);
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) cloud(i, 0) = 2.0 + 0.1 * rng.normal();
  const auto view = EmpiricalView::constant(EmpiricalMeasure(cloud), MollifierSpec(KernelKind::gaussian, 0.1, 1));
  Matrix drift;
  SigmaField sigma;
  coefficients(problem, view, 0.0, cloud, drift, sigma);
  EXPECT_LT(drift.mean(), 0.0);
  EXPECT_EQ(sigma.scalar(0), 1.0);

  PocOptions opt;
  opt.store_paths = false;
  const PocResult r = baseline_poc(problem, 5000, TimeGrid(0.0, 10.0, 1000), MollifierSpec(KernelKind::gaussian, 0.1, 1),
                                   9, opt);
  const double start = sample_initial(problem, 5000, 9, 0).mean();
  EXPECT_NEAR(start, 1.0, 0.05);
  EXPECT_LT(std::abs(r.terminal.mean()), 0.5 * start);
}

TEST(CurieWeiss, MeanUsesAtomWeights) {
  Matrix atoms(2, 1);
  atoms << 1.0, 4.0;
  Vector w(2);
  w << 0.75, 0.25;
  const EmpiricalView view(TimeGrid(0.0, 1.0, 1), {EmpiricalMeasure(atoms, w)},
                           MollifierSpec(KernelKind::gaussian, 0.1, 1));
  EXPECT_NEAR(measure_mean(view, StepContext{}, 10)(0), 1.75, 1e-15);
}

// ------------------------------------------------------- fractional porous

TEST(FpmeSigma, Examples) {
  EXPECT_NEAR(fpme_sigma(0.4, 2.0, 1.0), 0.4, 1e-15);
  EXPECT_EQ(fpme_sigma(0.0, 2.0, 1.0), 0.0);
  EXPECT_NEAR(fpme_sigma(0.5, 3.0, 1.0), 0.25, 1e-15);
  EXPECT_THROW(fpme_sigma(-0.5, 3.0, 1.0), InvalidParameter);
}

TEST(FpmeProblem, CoefficientsAndValidation) {
  FpmeOptions opt;
  const ProblemSpec problem = fpme_problem(opt);
  EXPECT_EQ(problem.noise, NoiseKind::alpha_stable);
  EXPECT_EQ(problem.stable_alpha, 1.0);
  const FunctionView view(1, [](const double* x) { return std::max(0.0, 0.5 - std::abs(x[0])); });
  Matrix x(3, 1);
  x << 0.0, 0.2, 0.9;
  Matrix drift;
  SigmaField sigma;
  coefficients(problem, view, 1.0, x, drift, sigma);
  EXPECT_NEAR(sigma.scalar(0), 0.5, 1e-15);
  EXPECT_NEAR(sigma.scalar(1), 0.3, 1e-15);
  EXPECT_EQ(sigma.scalar(2), 0.0);
  EXPECT_EQ(drift.cwiseAbs().maxCoeff(), 0.0);
  opt.alpha = 2.0;
  EXPECT_THROW(fpme_problem(opt), InvalidParameter);
  opt.alpha = 1.0;
  opt.d = 2;
  EXPECT_THROW(fpme_problem(opt), DimensionError);
}

// ------------------------------------------------------------------- zoo

TEST(ProblemZoo, InitialSamplersMatchDensities) {
  PmeOptions pme;
  pme.params = preset_pme(1);
  const std::vector<ProblemSpec> zoo{pme_problem(pme), fpme_problem(FpmeOptions{}),
                                     curie_weiss_problem(CurieWeissParams{}), linear_problem()};
  for (const auto& p : zoo) {
    const Matrix x = sample_initial(p, 40000, 21, 0);
    std::vector<double> v(x.data(), x.data() + x.size());
    // Numerical CDF of the initial density on a fine grid.
    const int n = 40000;
    const double lo = -8.0, hi = 8.0, h = (hi - lo) / n;
    std::vector<double> cdf(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      const double mid = lo + (i + 0.5) * h;
      cdf[i + 1] = cdf[i] + p.initial_density(&mid) * h;
    }
    EXPECT_NEAR(cdf[n], 1.0, 1e-4) << p.name;
    const auto f = [&](double y) {
      const double s = std::clamp((y - lo) / h, 0.0, static_cast<double>(n));
      const auto i = static_cast<int>(std::min(s, n - 1.0));
      return cdf[i] + (s - i) * (cdf[i + 1] - cdf[i]);
    };
    EXPECT_LT(ks_distance(v, f), 0.01) << p.name;
  }
}
