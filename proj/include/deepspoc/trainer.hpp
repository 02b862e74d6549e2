#pragma once

// The deepSPoC epoch loop.

#include <chrono>
#include <functional>
#include <optional>
#include <vector>

#include "deepspoc/adam.hpp"
#include "deepspoc/density_model.hpp"
#include "deepspoc/fourier.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/objectives.hpp"
#include "deepspoc/problem_spec.hpp"
#include "deepspoc/sde_engine.hpp"
#include "deepspoc/training_sets.hpp"

namespace deepspoc {

struct TrainConfig {
  std::size_t particles = 1000;
  LossKind loss = LossKind::sq;
  TrainingSetPolicy policy;
  Schedule schedule;
  AdamConfig adam;
  MollifierSpec mollifier;
  std::size_t epochs = 100;
  std::size_t n_ada = 0;        ///< adaptive outer iterations after the first pass
  bool reset_adam = true;       ///< fresh Adam state at every outer iteration
  bool divide_by_nodes = false; ///< divide L_sq by M + 1
  bool truncate = true;         ///< truncate particles before Fourier projections
  bool closed_form_fourier = true;
  double log_floor = 1e-12;
  RectifyOptions rectify;
  RectifyOptions kl_normalizer{512, std::size_t{1} << 16, 4096, 3, 1.2, 0x51ED};
  SamplerOptions sampler;
  std::uint64_t seed = 0;
  bool antithetic = false;  ///< second half of every batch mirrors the first half
};

struct EpochReport {
  std::size_t outer = 0;
  std::size_t epoch = 0;
  std::uint64_t stream = 0;  ///< RNG epoch key
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  std::size_t clamped_logs = 0;
  double acceptance_rate = 1.0;
  std::size_t outside_points = 0;
  std::size_t truncated = 0;
};

class Trainer {
 public:
  Trainer(const ProblemSpec& problem, DensityModel& model, TimeGrid grid, TrainConfig cfg)
      : problem_(problem), model_(model), grid_(grid), cfg_(std::move(cfg)) {
    validate();
  }

  void validate() const {
    if (cfg_.particles == 0) throw EmptyBatchError("training needs a positive batch size K");
    if (cfg_.antithetic && cfg_.particles % 2 != 0) throw ConfigError("antithetic batches need an even K");
    if (model_.dim() != problem_.dim) throw DimensionError("model and problem dimensions differ");
    cfg_.schedule.validate();
    cfg_.mollifier.validate();
    if (cfg_.mollifier.dim != problem_.dim) throw DimensionError("mollifier and problem dimensions differ");
    cfg_.policy.validate(cfg_.particles);
    const Capabilities caps = model_.capabilities();
    if (cfg_.loss == LossKind::path && !caps.exact_density) {
      throw ConfigError("path loss needs a model with an exact density (coupling flow)");
    }
    if (cfg_.loss == LossKind::kl && cfg_.policy.mode == SetMode::model_importance && !caps.direct_sampling) {
      throw ConfigError("kl loss with model importance sampling needs a directly sampleable model");
    }
  }

  const TrainConfig& config() const { return cfg_; }
  const TimeGrid& grid() const { return grid_; }
  const AdamState& optimizer_state() const { return adam_; }
  void reset_optimizer() { adam_ = AdamState{}; }
  const std::optional<TrajectoryEnsemble>& last_ensemble() const { return previous_; }

  std::uint64_t stream_index(std::size_t outer, std::size_t epoch) const {
    return static_cast<std::uint64_t>(outer * cfg_.epochs + epoch);
  }

  /// Runs epoch `epoch` (1-based) of outer iteration `outer`. On any error
  /// the model and optimizer keep their pre-epoch state.
  EpochReport run_epoch(std::size_t outer, std::size_t epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochReport rep;
    rep.outer = outer;
    rep.epoch = epoch;
    rep.stream = stream_index(outer, epoch);
    rep.lr = cfg_.schedule.rate(epoch);

    ModelView view(model_, cfg_.rectify, cfg_.sampler);
    TrajectoryEnsemble ens = cfg_.antithetic ? antithetic_batch(view, rep.stream)
                                             : simulate_batch(problem_, view, grid_, cfg_.particles, cfg_.seed, rep.stream);

    std::vector<double> theta(model_.params().begin(), model_.params().end());
    std::optional<AdamState> adam;
    auto* fourier = dynamic_cast<FourierDensity*>(&model_);
    if (fourier && cfg_.loss == LossKind::sq && cfg_.closed_form_fourier) {
      fourier_epoch(*fourier, ens, rep, theta);
    } else {
      LossResult r = gradient_epoch(outer, ens, view, rep);
      rep.loss = r.value;
      rep.clamped_logs = r.clamped;
      adam = adam_;
      adam_step(*adam, theta, r.grad, rep.lr, cfg_.adam);
    }
    const SampleStats ss = view.sampling_stats();
    rep.acceptance_rate = ss.proposals == 0 ? 1.0 : ss.acceptance_rate();

    model_.set_params(theta);
    if (adam) adam_ = std::move(*adam);
    previous_ = std::move(ens);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  }

  /// All outer iterations and epochs; `on_epoch` sees every report.
  void train(const std::function<void(const EpochReport&)>& on_epoch = {}) {
    for (std::size_t a = 0; a <= cfg_.n_ada; ++a) {
      if (a > 0 && cfg_.reset_adam) reset_optimizer();
      for (std::size_t n = 1; n <= cfg_.epochs; ++n) {
        EpochReport rep = run_epoch(a, n);
        if (on_epoch) on_epoch(rep);
      }
    }
  }

 private:
  /// K/2 particles followed by the mirror image of the same K/2 paths.
  TrajectoryEnsemble antithetic_batch(const MeasureView& view, std::uint64_t stream) const {
    const std::size_t half = cfg_.particles / 2;
    TrajectoryEnsemble ens = simulate_batch(problem_, view, grid_, half, cfg_.seed, stream);
    SimulationOptions mirror;
    mirror.mirror = true;
    const TrajectoryEnsemble image = simulate_batch(problem_, view, grid_, half, cfg_.seed, stream, mirror);
    for (std::size_t m = 0; m < ens.nodes(); ++m) {
      Matrix both(static_cast<Eigen::Index>(2 * half), ens.positions[m].cols());
      both << ens.positions[m], image.positions[m];
      ens.positions[m] = std::move(both);
    }
    ens.particles = 2 * half;
    return ens;
  }

  void fourier_epoch(FourierDensity& f, const TrajectoryEnsemble& ens, EpochReport& rep,
                     std::vector<double>& theta) const {
    const std::size_t nb = f.basis().size();
    const double half = f.basis().box().hi[0] - cfg_.mollifier.epsilon;
    for (std::size_t m = 0; m < ens.nodes(); ++m) {
      EmpiricalMeasure mu(ens.positions[m]);
      if (cfg_.truncate) {
        TruncationReport tr = truncate_particles(mu, half);
        rep.truncated += tr.dropped;
        mu = std::move(tr.measure);
      }
      const Vector proj = project_kde(mu, cfg_.mollifier, f.basis());
      std::span<double> node(theta.data() + m * nb, nb);
      double res = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        const double e = node[j] - proj(static_cast<Eigen::Index>(j));
        res += e * e;
      }
      rep.loss += res;
      fourier_update(node, proj, rep.lr);
    }
  }

  LossResult gradient_epoch(std::size_t outer, const TrajectoryEnsemble& ens, const ModelView& view,
                            EpochReport& rep) const {
    if (cfg_.loss == LossKind::path) return loss_path(model_, ens);
    TrainingSetPolicy policy = cfg_.policy;
    if (policy.mode == SetMode::model_importance && outer == 0) policy.mode = SetMode::uniform;
    SetContext ctx;
    ctx.grid = &grid_;
    ctx.domain = &model_.domain();
    ctx.seed = cfg_.seed;
    ctx.epoch = rep.stream;
    ctx.previous = previous_ ? &*previous_ : nullptr;
    ctx.current = &ens;
    ctx.model = &view;
    ctx.mollifier = &cfg_.mollifier;
    TrainingSets sets = build_training_sets(policy, ctx);
    rep.outside_points = sets.outside;
    const std::vector<Vector> table = batch_kde_table(ens, cfg_.mollifier, sets.points);
    std::vector<NodeBatch> nodes(grid_.nodes());
    for (std::size_t m = 0; m < nodes.size(); ++m) {
      nodes[m].t = grid_.time(m);
      nodes[m].points = std::move(sets.points[m]);
      nodes[m].target = table[m];
      if (!sets.eta.empty()) nodes[m].eta = std::move(sets.eta[m]);
    }
    if (cfg_.loss == LossKind::sq) return loss_sq(model_, nodes, cfg_.divide_by_nodes);
    KlOptions opt;
    opt.log_floor = cfg_.log_floor;
    std::optional<Quadrature> q;
    if (!model_.capabilities().exact_density) {
      q = rectify_quadrature(model_.domain(), cfg_.kl_normalizer);
      opt.normalizer_quadrature = &*q;
    }
    return loss_kl(model_, nodes, opt);
  }

  const ProblemSpec& problem_;
  DensityModel& model_;
  TimeGrid grid_;
  TrainConfig cfg_;
  AdamState adam_;
  std::optional<TrajectoryEnsemble> previous_;
};

}  // namespace deepspoc
