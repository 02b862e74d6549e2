#pragma once

// Training-point policies: uniform, adaptive union, importance sampling.

#include <cstdint>
#include <string>
#include <vector>

#include "deepspoc/density_model.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/rng.hpp"
#include "deepspoc/sde_engine.hpp"

namespace deepspoc {

enum class SetMode { uniform, adaptive_union, model_importance, kde_importance, particle_paths };

inline std::string to_string(SetMode m) {
  switch (m) {
    case SetMode::uniform: return "uniform";
    case SetMode::adaptive_union: return "adaptive_union";
    case SetMode::model_importance: return "model_importance";
    case SetMode::kde_importance: return "kde_importance";
    case SetMode::particle_paths: return "particle_paths";
  }
  return "unknown";
}

inline SetMode set_mode_from_string(const std::string& s) {
  for (auto m : {SetMode::uniform, SetMode::adaptive_union, SetMode::model_importance,
                 SetMode::kde_importance, SetMode::particle_paths}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown training-set mode '" + s + "'");
}

struct TrainingSetPolicy {
  SetMode mode = SetMode::uniform;
  std::size_t n_uniform = 1000;   ///< N1 (also N for the importance modes)
  std::size_t n_adaptive = 0;     ///< N2
  double noise = 0.0;             ///< sigma of the exploration noise

  void validate(std::size_t particles) const {
    if (!(noise >= 0.0)) throw ConfigError("training set noise must be nonnegative");
    if (mode == SetMode::adaptive_union && n_adaptive > particles) {
      throw ConfigError("adaptive training points N2 = " + std::to_string(n_adaptive) +
                        " exceed the batch size K = " + std::to_string(particles));
    }
    if ((mode == SetMode::uniform || mode == SetMode::model_importance || mode == SetMode::kde_importance) &&
        n_uniform == 0) {
      throw ConfigError("training set needs at least one point");
    }
  }

  bool operator==(const TrainingSetPolicy&) const = default;
};

struct TrainingSets {
  std::vector<Matrix> points;  ///< S_m per node
  std::vector<Vector> eta;     ///< sampling densities per node (empty: eta = 1)
  std::size_t outside = 0;     ///< adaptive points that fell outside the box
};

struct SetContext {
  const TimeGrid* grid = nullptr;
  const Box* domain = nullptr;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  const TrajectoryEnsemble* previous = nullptr;  ///< last epoch's paths
  const TrajectoryEnsemble* current = nullptr;   ///< this epoch's paths
  const ModelView* model = nullptr;              ///< frozen model for importance sampling
  const MollifierSpec* mollifier = nullptr;
};

/// Builds S_m for every node. Adaptive and importance modes fall back to
/// the uniform set when their source is unavailable (first epoch).
inline TrainingSets build_training_sets(const TrainingSetPolicy& policy, const SetContext& ctx) {
  if (!ctx.grid || !ctx.domain) throw InvalidParameter("training sets need a grid and a domain");
  const std::size_t nodes = ctx.grid->nodes();
  const auto d = static_cast<Eigen::Index>(ctx.domain->dim());
  TrainingSets out;
  out.points.resize(nodes);

  auto uniform = [&] {
    CounterRng rng(ctx.seed, ctx.epoch, Lane::training, 0, 0);
    return uniform_points(policy.n_uniform, *ctx.domain, rng);
  };

  switch (policy.mode) {
    case SetMode::uniform: {
      const Matrix s = uniform();
      for (auto& p : out.points) p = s;
      return out;
    }
    case SetMode::adaptive_union: {
      const Matrix s = uniform();
      if (!ctx.previous || policy.n_adaptive == 0) {
        for (auto& p : out.points) p = s;
        return out;
      }
      const auto n2 = static_cast<Eigen::Index>(policy.n_adaptive);
      const auto n1 = s.rows();
      const std::size_t k = ctx.previous->particles;
      // N2 distinct particles chosen by a partial Fisher-Yates shuffle.
      std::vector<std::size_t> idx(k);
      for (std::size_t i = 0; i < k; ++i) idx[i] = i;
      CounterRng pick(ctx.seed, ctx.epoch, Lane::adaptive, 0, 0);
      for (std::size_t i = 0; i < policy.n_adaptive; ++i) {
        const std::size_t j = i + pick.below(k - i);
        std::swap(idx[i], idx[j]);
      }
      for (std::size_t m = 0; m < nodes; ++m) {
        Matrix& p = out.points[m];
        p.resize(n1 + n2, d);
        p.topRows(n1) = s;
        const Matrix& prev = ctx.previous->positions.at(m);
        for (Eigen::Index j = 0; j < n2; ++j) {
          CounterRng rng(ctx.seed, ctx.epoch, Lane::adaptive, static_cast<std::uint64_t>(j) + 1, m);
          for (Eigen::Index c = 0; c < d; ++c) {
            p(n1 + j, c) = prev(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]), c) +
                           policy.noise * rng.normal();
          }
          if (!ctx.domain->contains(p.row(n1 + j))) ++out.outside;
        }
      }
      return out;
    }
    case SetMode::model_importance: {
      if (!ctx.model) throw InvalidParameter("model importance sampling needs the frozen model");
      out.eta.resize(nodes);
      for (std::size_t m = 0; m < nodes; ++m) {
        CounterRng rng(ctx.seed, ctx.epoch, Lane::training, 1, m);
        const double t = ctx.grid->time(m);
        out.points[m] = ctx.model->sample(t, policy.n_uniform, rng);
        ctx.model->density(t, out.points[m], out.eta[m]);
      }
      return out;
    }
    case SetMode::kde_importance: {
      if (!ctx.previous) {
        const Matrix s = uniform();
        for (auto& p : out.points) p = s;
        return out;
      }
      if (!ctx.mollifier) throw InvalidParameter("kde importance sampling needs the mollifier");
      out.eta.resize(nodes);
      for (std::size_t m = 0; m < nodes; ++m) {
        EmpiricalMeasure mu(ctx.previous->positions.at(m));
        EmpiricalView view = EmpiricalView::constant(mu, *ctx.mollifier);
        CounterRng rng(ctx.seed, ctx.epoch, Lane::training, 2, m);
        out.points[m] = view.sample(0.0, policy.n_uniform, rng);
        view.density(0.0, out.points[m], out.eta[m]);
      }
      return out;
    }
    case SetMode::particle_paths: {
      if (!ctx.current) throw InvalidParameter("particle-path training sets need the current ensemble");
      for (std::size_t m = 0; m < nodes; ++m) out.points[m] = ctx.current->positions.at(m);
      return out;
    }
  }
  return out;
}

}  // namespace deepspoc
