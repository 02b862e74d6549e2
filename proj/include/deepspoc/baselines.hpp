#pragma once

// Reference particle solvers: all-pairs PoC and batch-by-batch SPoC.

#include <memory>
#include <optional>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/fourier.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/sde_engine.hpp"

namespace deepspoc {

struct PocOptions {
  bool store_paths = true;  ///< keep every node (otherwise only the last)
  SimulationOptions simulation;
};

struct PocResult {
  TrajectoryEnsemble ensemble;  ///< all nodes, or just the terminal one
  Matrix terminal;
};

/// K interacting particles, each seeing the mollified empirical measure of
/// the whole cloud at the previous node.
inline PocResult baseline_poc(const ProblemSpec& problem, std::size_t particles, const TimeGrid& grid,
                              const MollifierSpec& moll, std::uint64_t seed, const PocOptions& opt = {}) {
  if (particles < 2) throw InvalidParameter("PoC baseline needs at least two particles");
  PocResult out;
  out.ensemble.grid = grid;
  out.ensemble.particles = particles;
  out.ensemble.dim = problem.dim;
  out.ensemble.seed = seed;
  Matrix x = opt.simulation.initial_positions
                 ? *opt.simulation.initial_positions
                 : sample_initial(problem, particles, seed, 0, opt.simulation.mirror);
  if (opt.simulation.initial_positions && opt.simulation.mirror) x = -x;
  check_finite_positions(x, 0);
  if (opt.store_paths) out.ensemble.positions.push_back(x);
  for (std::size_t m = 1; m < grid.nodes(); ++m) {
    EmpiricalView view = EmpiricalView::constant(EmpiricalMeasure(x), moll);
    x = advance_particles(problem, view, grid, x, m, seed, 0, opt.simulation);
    if (opt.store_paths) out.ensemble.positions.push_back(x);
  }
  if (!opt.store_paths) out.ensemble.positions.push_back(x);
  out.terminal = std::move(x);
  return out;
}

enum class SpocView { mollified, projected };

struct SpocOptions {
  SpocView view = SpocView::mollified;
  std::optional<CosineBasis> basis;  ///< required for the projected view
  bool truncate = true;              ///< truncate atoms before projecting
  RectifyOptions rectify;
  SamplerOptions sampler;
};

/// mu^n = mu^{n-1} + a_n (mu_hat^n - mu^{n-1}) kept explicitly as weighted
/// batches. mu^0 is the first batch drawn from mu_0 held fixed in time
/// (mollified view) or the uniform density (projected view).
struct SpocResult {
  std::vector<TrajectoryEnsemble> batches;
  std::vector<double> weights;  ///< weight of each batch in the final mixture
  double base_weight = 1.0;     ///< residual weight on mu^0
  Matrix base;                  ///< atoms of mu^0 (mollified view)
  std::unique_ptr<FourierDensity> projected;  ///< final projected mixture (projected view)

  double total_weight() const {
    double s = base_weight;
    for (double w : weights) s += w;
    return s;
  }
};

namespace detail {

inline EmpiricalMeasure spoc_node_measure(const SpocResult& st, std::size_t m) {
  std::size_t rows = 0;
  for (const auto& b : st.batches) rows += b.particles;
  const bool with_base = st.base_weight > 0.0 && st.base.rows() > 0;
  if (with_base) rows += static_cast<std::size_t>(st.base.rows());
  const Eigen::Index d = st.batches.empty() ? st.base.cols() : static_cast<Eigen::Index>(st.batches[0].dim);
  Matrix pts(static_cast<Eigen::Index>(rows), d);
  Vector w(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  if (with_base) {
    const double each = st.base_weight / static_cast<double>(st.base.rows());
    pts.topRows(st.base.rows()) = st.base;
    w.head(st.base.rows()).setConstant(each);
    r = st.base.rows();
  }
  for (std::size_t l = 0; l < st.batches.size(); ++l) {
    const Matrix& x = st.batches[l].positions.at(m);
    pts.middleRows(r, x.rows()) = x;
    w.segment(r, x.rows()).setConstant(st.weights[l] / static_cast<double>(x.rows()));
    r += x.rows();
  }
  return EmpiricalMeasure(std::move(pts), std::move(w));
}

inline void project_mixture(const SpocResult& st, const MollifierSpec& moll, const SpocOptions& opt,
                            FourierDensity& f) {
  const std::size_t nb = f.basis().size();
  const double c0 = 1.0 / std::sqrt(f.basis().box().volume());
  const double half = f.basis().box().hi[0] - moll.epsilon;
  auto theta = f.params_mut();
  for (std::size_t m = 0; m < f.grid().nodes(); ++m) {
    std::span<double> node(theta.data() + m * nb, nb);
    std::fill(node.begin(), node.end(), 0.0);
    node[0] = st.base_weight * c0;
    if (st.batches.empty()) continue;
    std::size_t rows = 0;
    for (const auto& b : st.batches) rows += b.particles;
    Matrix pts(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(f.dim()));
    Vector w(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (std::size_t l = 0; l < st.batches.size(); ++l) {
      Matrix x = st.batches[l].positions.at(m);
      if (opt.truncate) x = truncate_particles(EmpiricalMeasure(x), half).measure.points;
      pts.middleRows(r, x.rows()) = x;
      w.segment(r, x.rows()).setConstant(st.weights[l] / static_cast<double>(x.rows()));
      r += x.rows();
    }
    // The weights sum to 1 - base_weight; the projection is linear in the measure.
    const Vector proj = project_kde(EmpiricalMeasure(std::move(pts), std::move(w)), moll, f.basis());
    for (std::size_t j = 0; j < nb; ++j) node[j] += proj(static_cast<Eigen::Index>(j));
  }
}

}  // namespace detail

/// Runs len(rates) batches of K particles; batch l is simulated against
/// mu^{l-1} with RNG epoch key l.
inline SpocResult baseline_spoc(const ProblemSpec& problem, std::size_t particles, const TimeGrid& grid,
                                const std::vector<double>& rates, const MollifierSpec& moll,
                                std::uint64_t seed, const SpocOptions& opt = {}) {
  if (particles == 0) throw EmptyBatchError("SPoC baseline needs a positive batch size");
  for (double a : rates) {
    if (!(a > 0.0 && a <= 1.0)) throw InvalidParameter("SPoC rates must lie in (0, 1]");
  }
  SpocResult st;
  if (opt.view == SpocView::projected) {
    if (!opt.basis) throw ConfigError("projected SPoC view needs a cosine basis");
    st.projected = std::make_unique<FourierDensity>(*opt.basis, grid);
  } else {
    st.base = sample_initial(problem, particles, seed, 0);
  }
  for (std::size_t l = 1; l <= rates.size(); ++l) {
    TrajectoryEnsemble batch;
    if (opt.view == SpocView::projected) {
      detail::project_mixture(st, moll, opt, *st.projected);
      ModelView view(*st.projected, opt.rectify, opt.sampler);
      batch = simulate_batch(problem, view, grid, particles, seed, l);
    } else {
      std::vector<EmpiricalMeasure> nodes;
      for (std::size_t m = 0; m < grid.nodes(); ++m) nodes.push_back(detail::spoc_node_measure(st, m));
      EmpiricalView view(grid, std::move(nodes), moll);
      batch = simulate_batch(problem, view, grid, particles, seed, l);
    }
    const double a = rates[l - 1];
    for (double& w : st.weights) w *= 1.0 - a;
    st.base_weight *= 1.0 - a;
    st.weights.push_back(a);
    st.batches.push_back(std::move(batch));
  }
  if (st.projected) detail::project_mixture(st, moll, opt, *st.projected);
  return st;
}

}  // namespace deepspoc
