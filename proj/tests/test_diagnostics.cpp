#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "test_support.hpp"

using namespace deepspoc;
using testing_support::constant_problem;

namespace {

double gauss(const double* x) { return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2.0 * kPi); }

BatchDensity scaled_gauss(double c) {
  return [c](const Matrix& x, Vector& out) {
    out.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = c * gauss(&x(i, 0));
  };
}

std::vector<double> normals(std::size_t n, double mean, double sd, std::uint64_t seed) {
  CounterRng rng(seed, 0, Lane::generic, 0, 0);
  std::vector<double> v(n);
  for (double& x : v) x = mean + sd * rng.normal();
  return v;
}

Matrix normal_cloud(std::size_t n, std::size_t d, double sd, std::uint64_t seed) {
  CounterRng rng(seed, 0, Lane::generic, 0, 0);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = sd * rng.normal();
  }
  return x;
}

/// Each sample repeated `times` times, so unequal counts reduce to equal ones.
std::vector<double> repeat(const std::vector<double>& v, std::size_t times) {
  std::vector<double> out;
  for (double x : v) out.insert(out.end(), times, x);
  return out;
}

/// A Dirac flow t -> delta_{m(t)} on a time grid.
class DiracFlow final : public MeasureView {
 public:
  DiracFlow(TimeGrid grid, std::vector<double> path) : grid_(grid) {
    for (double m : path) atoms_.push_back(Matrix::Constant(1, 1, m));
  }
  std::size_t dim() const override { return 1; }
  void density(double, const Matrix&, Vector&) const override { throw CapabilityError("atomic"); }
  Matrix sample(double t, std::size_t n, CounterRng&) const override {
    return Matrix::Constant(static_cast<Eigen::Index>(n), 1, atoms_[grid_.nearest_node(t)](0, 0));
  }
  const Matrix* atoms(double t) const override { return &atoms_[grid_.nearest_node(t)]; }
  const std::vector<Matrix>& nodes() const { return atoms_; }

 private:
  TimeGrid grid_;
  std::vector<Matrix> atoms_;
};

std::vector<double> random_path(const TimeGrid& grid, std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  const double a = n01(gen), b = n01(gen), c = n01(gen);
  std::vector<double> m(grid.nodes());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double t = grid.time(i);
    m[i] = a + b * t + c * std::sin(3.0 * t);
  }
  return m;
}

std::vector<Matrix> gaussian_sequence(const TimeGrid& grid, std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::vector<Matrix> out;
  for (std::size_t m = 0; m < grid.nodes(); ++m) {
    Matrix x = normal_cloud(n, d, 1.0 + 0.3 * std::abs(n01(gen)), seed * 1000 + m);
    x.array() += n01(gen);
    out.push_back(x);
  }
  return out;
}

TrajectoryEnsemble one_particle_ensemble(const TimeGrid& grid, const std::vector<double>& second_moment) {
  TrajectoryEnsemble e;
  e.grid = grid;
  e.particles = 1;
  e.dim = 1;
  for (double y : second_moment) e.positions.push_back(Matrix::Constant(1, 1, std::sqrt(y)));
  return e;
}

}  // namespace

// ------------------------------------------------------------- relative l2

TEST(RelativeL2, ExactModelGivesZero) {
  const Box box = Box::cube(1, 4.0);
  const double c0 = 2.5;
  EXPECT_NEAR(relative_l2(scaled_gauss(1.0 / c0), gauss, box, 100000, c0, 1).value, 0.0, 1e-15);
}

TEST(RelativeL2, ZeroModelGivesOne) {
  const Box box = Box::cube(1, 4.0);
  EXPECT_DOUBLE_EQ(relative_l2(scaled_gauss(0.0), gauss, box, 100000, 1.0, 1).value, 1.0);
}

TEST(RelativeL2, TenPercentOverestimate) {
  const Box box = Box::cube(1, 4.0);
  const double c0 = 0.7;
  EXPECT_NEAR(relative_l2(scaled_gauss(1.1 / c0), gauss, box, 100000, c0, 3).value, 0.1, 1e-12);
}

TEST(RelativeL2, DetectsScaleWithinMonteCarloNoise) {
  const Box box = Box::cube(1, 4.0);
  const std::size_t n = 100000;
  for (double c : {0.25, 0.5, 1.5, 2.0, 3.0}) {
    const Estimate e = relative_l2(scaled_gauss(c), gauss, box, n, 1.0, 11);
    EXPECT_NEAR(e.value, std::abs(c - 1.0), 3.0 / std::sqrt(static_cast<double>(n))) << c;
  }
}

TEST(RelativeL2, StandardErrorMatchesSpreadAcrossSeeds) {
  const Box box = Box::cube(1, 4.0);
  const BatchDensity wobbly = [](const Matrix& x, Vector& out) {
    out.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = gauss(&x(i, 0)) * (1.0 + 0.3 * std::sin(5.0 * x(i, 0)));
  };
  std::vector<double> v;
  double se = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Estimate e = relative_l2(wobbly, gauss, box, 2000, 1.0, 100 + s);
    v.push_back(e.value);
    se += e.std_error / 200.0;
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 200.0;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean) / 199.0;
  EXPECT_GT(se, 0.0);
  EXPECT_NEAR(se / std::sqrt(var), 1.0, 0.25);
}

TEST(RelativeL2, Preconditions) {
  const Box box = Box::cube(1, 4.0);
  EXPECT_THROW(relative_l2(scaled_gauss(1.0), gauss, box, 0, 1.0, 1), InvalidParameter);
  const PointFunction zero = [](const double*) { return 0.0; };
  EXPECT_THROW(relative_l2(scaled_gauss(1.0), zero, box, 100, 1.0, 1), NumericError);
}

TEST(RelativeL2, DeterministicGivenSeed) {
  const Box box = Box::cube(2, 3.0);
  const BatchDensity m = [](const Matrix& x, Vector& out) { out = (x.col(0).array() + 4.0).matrix(); };
  const PointFunction ref = [](const double* x) { return 4.0 + x[1]; };
  EXPECT_EQ(relative_l2(m, ref, box, 5000, 1.0, 9).value, relative_l2(m, ref, box, 5000, 1.0, 9).value);
  EXPECT_NE(relative_l2(m, ref, box, 5000, 1.0, 9).value, relative_l2(m, ref, box, 5000, 1.0, 10).value);
}

// ------------------------------------------------------------- wasserstein

TEST(Wasserstein1d, IdenticalSamplesGiveZero) {
  const std::vector<double> a = normals(1000, 0.0, 1.0, 1);
  EXPECT_EQ(wasserstein_1d(a, a, 1), 0.0);
  EXPECT_EQ(wasserstein_1d(a, a, 2), 0.0);
}

TEST(Wasserstein1d, SingleAtomTransport) {
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0}, {1.0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0}, {1.0}, 2), 1.0);
}

TEST(Wasserstein1d, TranslationOfGaussian) {
  const double theta = 0.7;
  const std::vector<double> a = normals(100000, 0.0, 1.0, 1);
  const std::vector<double> b = normals(100000, theta, 1.0, 2);
  EXPECT_NEAR(wasserstein_1d(a, b, 1), theta, 0.02);
  EXPECT_NEAR(wasserstein_1d(b, a, 1), theta, 0.02);
}

TEST(Wasserstein1d, ExactShiftOfSameSample) {
  const std::vector<double> a = normals(5000, 0.0, 1.0, 3);
  std::vector<double> b = a;
  for (double& x : b) x -= 1.25;
  EXPECT_NEAR(wasserstein_1d(a, b, 1), 1.25, 1e-12);
  EXPECT_NEAR(wasserstein_1d(a, b, 2), 1.25, 1e-12);
}

TEST(Wasserstein1d, UnequalCountsMatchReplicatedSamples) {
  const std::vector<double> a = normals(3, 0.0, 1.0, 4);
  const std::vector<double> b = normals(5, 0.5, 2.0, 5);
  for (int p : {1, 2}) {
    EXPECT_NEAR(wasserstein_1d(a, b, p), wasserstein_1d(repeat(a, 5), repeat(b, 3), p), 1e-12) << p;
  }
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0}, {0.0, 2.0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d({0.0}, {0.0, 2.0}, 2), std::sqrt(2.0));
}

TEST(Wasserstein1d, MetricAxiomsOnSamples) {
  const std::vector<double> a = normals(4000, 0.0, 1.0, 6);
  const std::vector<double> b = normals(4000, 0.4, 1.5, 7);
  const std::vector<double> c = normals(4000, -0.3, 0.7, 8);
  for (int p : {1, 2}) {
    EXPECT_EQ(wasserstein_1d(a, b, p), wasserstein_1d(b, a, p));
    EXPECT_LE(wasserstein_1d(a, c, p), wasserstein_1d(a, b, p) + wasserstein_1d(b, c, p) + 1e-12);
    EXPECT_GT(wasserstein_1d(a, b, p), 0.0);
  }
}

TEST(Wasserstein1d, Preconditions) {
  EXPECT_THROW(wasserstein_1d({}, {1.0}, 1), EmptyBatchError);
  EXPECT_THROW(wasserstein_1d({1.0}, {}, 2), EmptyBatchError);
  EXPECT_THROW(wasserstein_1d({0.0}, {1.0}, 3), InvalidParameter);
}

TEST(SlicedW2, IdenticalCloudsGiveZero) {
  const Matrix a = normal_cloud(500, 3, 1.0, 1);
  EXPECT_EQ(sliced_w2(a, a, 64, 1), 0.0);
}

TEST(SlicedW2, TranslationIsExact) {
  const Matrix a = normal_cloud(2000, 3, 1.0, 2);
  Eigen::RowVectorXd v(3);
  v << 0.3, -1.2, 0.5;
  const Matrix b = a.rowwise() + v;
  for (std::size_t dirs : {1u, 3u, 7u, 128u}) EXPECT_NEAR(sliced_w2(a, b, dirs, 5), v.norm(), 1e-10) << dirs;
}

TEST(SlicedW2, IsotropicGaussianScaling) {
  const std::size_t d = 2;
  const Matrix a = normal_cloud(20000, d, 1.0, 3);
  const Matrix b = normal_cloud(20000, d, 2.0, 4);
  const double analytic = std::sqrt(static_cast<double>(d)) * std::abs(1.0 - 2.0);
  EXPECT_NEAR(sliced_w2(a, b, 128, 7) / analytic, 1.0, 0.10);
}

TEST(SlicedW2, Preconditions) {
  const Matrix a = normal_cloud(10, 2, 1.0, 1);
  EXPECT_THROW(sliced_w2(Matrix(0, 2), a, 4, 1), EmptyBatchError);
  EXPECT_THROW(sliced_w2(a, a, 0, 1), InvalidParameter);
  EXPECT_THROW(sliced_w2(a, normal_cloud(10, 3, 1.0, 1), 4, 1), DimensionError);
}

TEST(W2Estimate, ExactOnTheLine) {
  const std::vector<double> a = normals(300, 0.0, 1.0, 1), b = normals(300, 1.0, 2.0, 2);
  EXPECT_EQ(w2_estimate(testing_support::column_matrix(a), testing_support::column_matrix(b), 8, 1),
            wasserstein_1d(a, b, 2));
}

TEST(DensityDistances, ShiftedUniforms) {
  const auto u0 = [](double x) { return x >= 0.0 && x <= 1.0 ? 1.0 : 0.0; };
  const auto u1 = [](double x) { return x >= 0.5 && x <= 1.5 ? 1.0 : 0.0; };
  EXPECT_NEAR(w1_density_1d(u0, u1, -1.0, 3.0), 0.5, 1e-3);
  EXPECT_NEAR(l1_distance_1d(u0, u1, -1.0, 3.0), 1.0, 1e-3);
  EXPECT_THROW(w1_density_1d(u0, [](double) { return 0.0; }, -1.0, 3.0), DegenerateDensityError);
}

// ------------------------------------------------------------ moment slope

TEST(SecondMomentSlope, ExactLine) {
  const TimeGrid grid(0.0, 2.0, 10);
  std::vector<double> y(grid.nodes());
  for (std::size_t m = 0; m < y.size(); ++m) y[m] = 1.0 + 2.0 * grid.time(m);
  EXPECT_NEAR(second_moment_slope(one_particle_ensemble(grid, y)), 2.0, 1e-12);
}

TEST(SecondMomentSlope, ConstantMomentsGiveZero) {
  const TimeGrid grid(0.0, 1.0, 8);
  EXPECT_NEAR(second_moment_slope(one_particle_ensemble(grid, std::vector<double>(grid.nodes(), 3.0))), 0.0,
              1e-12);
}

TEST(SecondMomentSlope, RecoversKellerSegelSlopeUnderNoise) {
  const double slope = 4.0 * (1.0 - 1.0 / (8.0 * kPi));
  EXPECT_NEAR(slope, 3.84085, 1e-5);
  const TimeGrid grid(0.0, 1.0, 100);
  std::mt19937_64 gen(42);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> y(grid.nodes());
  for (std::size_t m = 0; m < y.size(); ++m) y[m] = 1.0 + slope * grid.time(m) + noise(gen);
  EXPECT_NEAR(second_moment_slope(one_particle_ensemble(grid, y)), slope, 0.02);
}

TEST(SecondMomentSlope, MomentsAverageOverParticles) {
  TrajectoryEnsemble e;
  e.grid = TimeGrid(0.0, 1.0, 1);
  Matrix x0(2, 2), x1(2, 2);
  x0 << 1, 0, 0, 1;
  x1 << 1, 1, 2, 0;
  e.positions = {x0, x1};
  const std::vector<double> m = second_moments(e);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 3.0);
  EXPECT_DOUBLE_EQ(second_moment_slope(e), 2.0);
}

TEST(SecondMomentSlope, Preconditions) {
  TrajectoryEnsemble e;
  e.grid = TimeGrid(0.0, 1.0, 1);
  e.positions = {Matrix::Zero(1, 1)};
  EXPECT_THROW(second_moment_slope(e), InvalidParameter);
  EXPECT_THROW(ols_slope({1.0, 1.0}, {0.0, 1.0}), InvalidParameter);
  EXPECT_THROW(ols_slope({1.0}, {0.0}), InvalidParameter);
}

// ------------------------------------------------------------------ phi map

TEST(PhiMap, FrozenDynamicsKeepInitialLaw) {
  const ProblemSpec p = constant_problem(2, 0.0, 0.0, NoiseKind::brownian);
  const TimeGrid grid(0.0, 1.0, 10);
  const Matrix init = normal_cloud(500, 2, 1.0, 3);
  const TrajectoryEnsemble e = phi_map(p, NullView(2), init, grid, 1);
  ASSERT_EQ(e.nodes(), grid.nodes());
  for (const Matrix& x : e.positions) EXPECT_EQ((x - init).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PhiMap, BrownianFromDiracHasVarianceT) {
  const ProblemSpec p = constant_problem(1, 0.0, 1.0, NoiseKind::brownian);
  const TimeGrid grid(0.0, 2.0, 8);
  const TrajectoryEnsemble e = phi_map(p, NullView(1), Matrix::Zero(100000, 1), grid, 5);
  for (std::size_t m = 1; m < e.nodes(); ++m) {
    const Matrix& x = e.at(m);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / static_cast<double>(x.rows() - 1);
    EXPECT_NEAR(var / grid.time(m), 1.0, 0.03) << m;
  }
}

TEST(PhiMap, DeterministicGivenSeed) {
  const ProblemSpec p = linear_problem();
  const TimeGrid grid(0.0, 1.0, 10);
  std::mt19937_64 gen(1);
  const DiracFlow mu(grid, random_path(grid, gen));
  const Matrix init = normal_cloud(200, 1, 1.0, 2);
  const TrajectoryEnsemble a = phi_map(p, mu, init, grid, 9);
  const TrajectoryEnsemble b = phi_map(p, mu, init, grid, 9);
  const TrajectoryEnsemble c = phi_map(p, mu, init, grid, 10);
  EXPECT_EQ((a.positions.back() - b.positions.back()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a.positions.back() - c.positions.back()).cwiseAbs().maxCoeff(), 0.0);
}

// ------------------------------------------------------------------ h_alpha

TEST(HAlpha, EqualSequencesGiveZero) {
  const TimeGrid grid(0.0, 1.0, 5);
  const std::vector<Matrix> mu = gaussian_sequence(grid, 200, 2, 1);
  EXPECT_EQ(h_alpha(mu, mu, 1.0, grid), 0.0);
}

TEST(HAlpha, UnitDistanceAtEveryNode) {
  const double alpha = 1.5, horizon = 2.0;
  const TimeGrid grid(0.0, horizon, 200);
  const std::vector<Matrix> zero(grid.nodes(), Matrix::Zero(1, 1));
  const std::vector<Matrix> one(grid.nodes(), Matrix::Ones(1, 1));
  const double trapezoid = [&] {
    double acc = 0.0;
    for (std::size_t m = 0; m < grid.nodes(); ++m) {
      const double w = (m == 0 || m + 1 == grid.nodes()) ? 0.5 : 1.0;
      acc += w * grid.dt() * std::exp(-alpha * grid.time(m));
    }
    return std::sqrt(acc);
  }();
  const double h = h_alpha(zero, one, alpha, grid);
  EXPECT_NEAR(h, trapezoid, 1e-12);
  EXPECT_NEAR(h, std::sqrt((1.0 - std::exp(-alpha * horizon)) / alpha), 1e-4);
}

TEST(HAlpha, WeightMeasuredFromGridStart) {
  const TimeGrid a(0.0, 1.0, 20), b(3.0, 1.0, 20);
  const std::vector<Matrix> zero(a.nodes(), Matrix::Zero(1, 1));
  const std::vector<Matrix> one(a.nodes(), Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(h_alpha(zero, one, 2.0, a), h_alpha(zero, one, 2.0, b));
}

TEST(HAlpha, SymmetricExactly) {
  const TimeGrid grid(0.0, 1.0, 4);
  for (std::size_t d : {1u, 2u}) {
    const std::vector<Matrix> mu = gaussian_sequence(grid, 300, d, 2);
    const std::vector<Matrix> nu = gaussian_sequence(grid, 300, d, 3);
    EXPECT_EQ(h_alpha(mu, nu, 0.5, grid, 32, 4), h_alpha(nu, mu, 0.5, grid, 32, 4)) << d;
  }
}

TEST(HAlpha, TriangleInequalitySpotCheck) {
  const TimeGrid grid(0.0, 1.0, 6);
  for (std::size_t d : {1u, 2u}) {
    const std::vector<Matrix> mu = gaussian_sequence(grid, 2000, d, 10);
    const std::vector<Matrix> nu = gaussian_sequence(grid, 2000, d, 11);
    const std::vector<Matrix> xi = gaussian_sequence(grid, 2000, d, 12);
    const double direct = h_alpha(mu, xi, 1.0, grid, 128, 3);
    const double via = h_alpha(mu, nu, 1.0, grid, 128, 3) + h_alpha(nu, xi, 1.0, grid, 128, 3);
    EXPECT_LE(direct, 1.02 * via) << d;
  }
}

TEST(HAlpha, Preconditions) {
  const TimeGrid grid(0.0, 1.0, 4);
  const std::vector<Matrix> mu(grid.nodes(), Matrix::Zero(1, 1));
  const std::vector<Matrix> short_seq(grid.nodes() - 1, Matrix::Zero(1, 1));
  EXPECT_THROW(h_alpha(mu, mu, 0.0, grid), InvalidParameter);
  EXPECT_THROW(h_alpha(mu, short_seq, 1.0, grid), DimensionError);
}

// ---------------------------------------------------------- posterior bound

TEST(PosteriorBound, DoublesAtFiveC0) {
  const double c_lip = 0.5, horizon = 1.0;
  const double c0 = posterior_c0(c_lip, horizon);
  EXPECT_DOUBLE_EQ(c0, 1.0);
  EXPECT_NEAR(posterior_bound(0.1, 5.0 * c0, c_lip, horizon), 0.2, 1e-15);
  EXPECT_EQ(posterior_bound(0.0, 5.0 * c0, c_lip, horizon), 0.0);
}

TEST(PosteriorBound, MonotoneInSelfDistanceAndWeight) {
  const double c_lip = 1.0, horizon = 2.0;
  const double c0 = posterior_c0(c_lip, horizon);
  double prev = -1.0;
  for (double h = 0.0; h <= 1.0; h += 0.05) {
    const double b = posterior_bound(h, 3.0 * c0, c_lip, horizon);
    EXPECT_GT(b, prev);
    EXPECT_GE(b, h);
    prev = b;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double a = 2.1 * c0; a < 50.0 * c0; a *= 1.3) {
    const double b = posterior_bound(0.3, a, c_lip, horizon);
    EXPECT_LT(b, prev);
    prev = b;
  }
}

TEST(PosteriorBound, HypothesisViolation) {
  const double c0 = posterior_c0(1.0, 1.0);
  EXPECT_THROW(posterior_bound(0.1, 2.0 * c0, 1.0, 1.0), HypothesisViolation);
  EXPECT_THROW(posterior_bound(0.1, c0, 1.0, 1.0), HypothesisViolation);
  EXPECT_THROW(contraction_factor(c0, 1.0, 1.0), HypothesisViolation);
  EXPECT_THROW(posterior_bound(-0.1, 3.0 * c0, 1.0, 1.0), InvalidParameter);
  EXPECT_NEAR(contraction_factor(5.0 * c0, 1.0, 1.0), 0.5, 1e-15);
}

TEST(PosteriorBound, PhiContractsOnLinearProblem) {
  const ProblemSpec p = linear_problem();
  const double horizon = 1.0;
  const TimeGrid grid(0.0, horizon, 50);
  const double c0 = posterior_c0(p.lipschitz, horizon);
  const double alpha = 5.0 * c0;
  const double factor = contraction_factor(alpha, p.lipschitz, horizon);
  Matrix init(20000, 1);
  CounterRng rng(17, 0, Lane::initial, 0, 0);
  for (Eigen::Index i = 0; i < init.rows(); ++i) p.initial_sample(rng, &init(i, 0));
  std::mt19937_64 gen(2024);
  for (int pair = 0; pair < 5; ++pair) {
    const DiracFlow mu(grid, random_path(grid, gen));
    const DiracFlow nu(grid, random_path(grid, gen));
    const double input = h_alpha(mu.nodes(), nu.nodes(), alpha, grid);
    const TrajectoryEnsemble a = phi_map(p, mu, init, grid, 31);
    const TrajectoryEnsemble b = phi_map(p, nu, init, grid, 31);
    const double output = h_alpha(a.positions, b.positions, alpha, grid);
    EXPECT_GT(input, 0.0);
    EXPECT_LE(output, factor * input * 1.05) << pair;
  }
}

// ------------------------------------------------------------------- output

TEST(MetricsCsv, HeaderAndRoundTrip) {
  std::ostringstream os;
  write_metrics_header(os);
  write_metric(os, {12, "relative_l2", 0.1 + 1e-17, 0.002});
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "epoch,metric,value,stderr");
  EXPECT_EQ(row.substr(0, 15), "12,relative_l2,");
  const std::size_t c = row.find(',', 15);
  EXPECT_EQ(std::stod(row.substr(15, c - 15)), 0.1 + 1e-17);
}

TEST(DensitySlice, ColumnsAndMissingReference) {
  const Matrix x = axis_slice(Box::cube(2, 1.0), 3);
  EXPECT_DOUBLE_EQ(x(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(x(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(x(2, 0), 1.0);
  EXPECT_EQ(x.col(1).cwiseAbs().maxCoeff(), 0.0);
  std::ostringstream os;
  write_density_slice(os, 0.5, x, Vector::Ones(3), nullptr, true);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,x0,x1,density_model,density_reference");
  std::getline(is, line);
  EXPECT_EQ(line, "0.5,-1,0,1,nan");
}
