#pragma once

// Experiment orchestration: builds problems and models from a RunConfig,
// drives the trainer and writes the artifact directory.

#include <openssl/evp.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "deepspoc/baselines.hpp"
#include "deepspoc/checkpoint.hpp"
#include "deepspoc/config.hpp"
#include "deepspoc/coupling_flow.hpp"
#include "deepspoc/diagnostics.hpp"
#include "deepspoc/fourier.hpp"
#include "deepspoc/mlp_density.hpp"
#include "deepspoc/parallel.hpp"
#include "deepspoc/problems.hpp"
#include "deepspoc/trainer.hpp"

namespace deepspoc {

namespace fs = std::filesystem;

// ------------------------------------------------------------ construction

struct BuiltProblem {
  ProblemSpec spec;
  std::shared_ptr<std::atomic<std::size_t>> clamps;
  std::optional<BarenblattParams> barenblatt;
  std::optional<CurieWeissParams> curie_weiss;
  double cw_normalizer = 1.0;
};

inline BuiltProblem build_problem(const ProblemConfig& p) {
  BuiltProblem out;
  switch (p.kind) {
    case ProblemKind::pme:
    case ProblemKind::pme_ode: {
      PmeOptions o;
      o.params = BarenblattParams{p.m, p.C, p.dim};
      o.t0 = p.t0;
      o.deterministic = p.kind == ProblemKind::pme_ode;
      out.spec = pme_problem(o);
      out.barenblatt = o.params;
      break;
    }
    case ProblemKind::keller_segel: {
      KellerSegelParams k;
      k.d = p.dim;
      k.n_g = p.n_g;
      k.delta_cut = p.delta_cut;
      k.per_particle = p.per_particle;
      k.initial = p.initial == "mixture" ? KellerSegelParams::Initial::mixture : KellerSegelParams::Initial::gaussian;
      KellerSegelProblem ks = keller_segel_problem(k);
      out.spec = std::move(ks.spec);
      out.clamps = ks.clamps;
      break;
    }
    case ProblemKind::curie_weiss: {
      CurieWeissParams c{p.beta, p.coupling, p.mean_samples};
      out.spec = curie_weiss_problem(c);
      out.curie_weiss = c;
      out.cw_normalizer = c.normalizer();
      break;
    }
    case ProblemKind::fpme: {
      FpmeOptions f;
      f.d = p.dim;
      f.alpha = p.stable_alpha;
      f.m = p.m;
      f.initial = BarenblattParams{p.initial_m, p.C, p.dim};
      f.t0 = p.t0;
      out.spec = fpme_problem(f);
      out.barenblatt = f.initial;
      break;
    }
    case ProblemKind::linear: {
      out.spec = linear_problem(p.mean_samples);
      out.spec.lipschitz = p.lipschitz;
      break;
    }
  }
  return out;
}

inline TimeGrid build_grid(const ProblemConfig& p) { return TimeGrid::with_step(p.t0, p.horizon, p.dt); }

inline Box build_domain(const RunConfig& c) { return Box::cube(c.problem.dim, c.model.half_width); }

inline std::unique_ptr<DensityModel> build_model(const RunConfig& c, const TimeGrid& grid) {
  const Box box = build_domain(c);
  switch (c.model.kind) {
    case ModelKind::fourier: {
      CosineBasis basis(box, c.model.basis_per_axis, c.model.quadrature_per_axis);
      auto f = std::make_unique<FourierDensity>(std::move(basis), grid);
      f->set_uniform();
      return f;
    }
    case ModelKind::mlp: {
      MlpConfig m;
      m.hidden = c.model.hidden;
      m.activation = c.model.activation;
      m.beta = c.model.softplus_beta;
      m.output_scale = c.model.output_scale;
      m.seed = c.training.seed;
      return std::make_unique<MlpDensity>(box, grid, m);
    }
    case ModelKind::flow: {
      FlowConfig f;
      f.blocks = c.model.blocks;
      f.hidden = c.model.hidden;
      f.activation = c.model.activation;
      f.scale_limit = c.model.scale_limit;
      f.seed = c.training.seed;
      return std::make_unique<CouplingFlowDensity>(box, grid, f);
    }
  }
  throw ConfigError("model.kind: unsupported");
}

inline RectifyOptions build_rectify(const RunConfig& c) {
  RectifyOptions r;
  r.mc_points = c.training.rectify_mc_points;
  r.scan_per_axis = c.training.rectify_scan_per_axis;
  r.seed = c.training.seed ^ 0x51EDULL;
  return r;
}

inline TrainConfig build_train_config(const RunConfig& c) {
  TrainConfig t;
  t.particles = c.training.particles;
  t.loss = c.training.loss;
  t.policy = c.training.policy;
  t.schedule = c.training.schedule;
  t.mollifier = MollifierSpec(c.training.mollifier, c.training.epsilon, c.problem.dim);
  t.epochs = c.training.epochs;
  t.n_ada = c.training.n_ada;
  t.reset_adam = c.training.reset_adam;
  t.divide_by_nodes = c.training.divide_by_nodes;
  t.truncate = c.training.truncate;
  t.log_floor = c.training.log_floor;
  t.rectify = build_rectify(c);
  t.seed = c.training.seed;
  return t;
}

// ----------------------------------------------------------------- hashing

/// SHA-1 of "blob <size>\0<content>", the content hash git uses for files.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

/// Accepts either a configuration document or a run manifest.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find("\"manifest_version\"") != std::string::npos) {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.contains("config")) throw ConfigError("manifest has no config block");
    return from_json(j["config"]);
  }
  return parse_config(text);
}

inline fs::path default_output_root() {
  if (const char* env = std::getenv("DEEPSPOC_OUTPUT_ROOT"); env && *env) return fs::path(env);
  return fs::path("runs");
}

// ----------------------------------------------------------------- metrics

struct MetricContext {
  const RunConfig* config = nullptr;
  const BuiltProblem* problem = nullptr;
  const TimeGrid* grid = nullptr;
  const ModelView* view = nullptr;
  const TrajectoryEnsemble* ensemble = nullptr;  ///< last simulated batch
};

/// Rectified mass at time t by an independent midpoint rule (d <= 3).
inline double rectified_mass(const ModelView& view, double t, std::size_t per_axis) {
  const Box& box = view.model().domain();
  if (box.dim() > 3) throw InvalidParameter("rectified_mass supports d <= 3");
  const Quadrature q = midpoint_grid(box, per_axis);
  Vector rho;
  view.density(t, q.points, rho);
  return rho.dot(q.weights);
}

inline std::vector<MetricRow> compute_metrics(const MetricContext& ctx, std::size_t epoch) {
  std::vector<MetricRow> rows;
  const RunConfig& cfg = *ctx.config;
  const BuiltProblem& bp = *ctx.problem;
  const double t_end = ctx.grid->t_end();
  const Box& box = ctx.view->model().domain();
  for (const std::string& name : cfg.diagnostics.metrics) {
    if (name == "relative_l2" && bp.spec.has_reference()) {
      const auto& ref = bp.spec.reference;
      const Estimate e = relative_l2(view_density(*ctx.view, t_end),
                                     [&](const double* x) { return ref(t_end, x); }, box,
                                     cfg.diagnostics.n_eval, bp.spec.reference_scale, cfg.training.seed);
      rows.push_back({epoch, name, e.value, e.std_error});
    } else if (name == "w1" && bp.spec.has_reference() && cfg.problem.dim == 1) {
      const auto& ref = bp.spec.reference;
      const ModelView& v = *ctx.view;
      auto f = [&](double x) {
        Matrix p(1, 1);
        p(0, 0) = x;
        Vector o;
        v.density(t_end, p, o);
        return o(0);
      };
      auto g = [&](double x) { return ref(t_end, &x); };
      rows.push_back({epoch, name, w1_density_1d(f, g, box.lo[0], box.hi[0], 4000), 0.0});
    } else if (name == "second_moment_slope" && ctx.ensemble) {
      rows.push_back({epoch, name, second_moment_slope(*ctx.ensemble), 0.0});
    } else if (name == "mass" && box.dim() <= 3) {
      double lo = 1e300, hi = -1e300;
      const std::size_t per_axis = box.dim() == 1 ? 20000 : (box.dim() == 2 ? 400 : 100);
      for (std::size_t m = 0; m < ctx.grid->nodes(); ++m) {
        const double mass = rectified_mass(*ctx.view, ctx.grid->time(m), per_axis);
        lo = std::min(lo, mass);
        hi = std::max(hi, mass);
      }
      rows.push_back({epoch, "mass_min", lo, 0.0});
      rows.push_back({epoch, "mass_max", hi, 0.0});
    } else if (name == "invariant_l1" && bp.curie_weiss) {
      const CurieWeissParams cw = *bp.curie_weiss;
      const double z = bp.cw_normalizer;
      const ModelView& v = *ctx.view;
      auto f = [&](double x) {
        Matrix p(1, 1);
        p(0, 0) = x;
        Vector o;
        v.density(t_end, p, o);
        return o(0);
      };
      auto g = [&](double x) { return cw_invariant_density(cw, x, z); };
      rows.push_back({epoch, name, l1_distance_1d(f, g, box.lo[0], box.hi[0], 6000), 0.0});
    }
  }
  return rows;
}

/// Slices along axis 0 at the first, middle and last node.
inline void write_slices(std::ostream& os, const RunConfig& cfg, const BuiltProblem& bp, const TimeGrid& grid,
                         const MeasureView& view, const Box& box) {
  const Matrix x = axis_slice(box, cfg.diagnostics.slice_points);
  const std::vector<std::size_t> nodes{0, grid.steps() / 2, grid.steps()};
  bool header = true;
  for (std::size_t m : nodes) {
    const double t = grid.time(m);
    Vector model;
    view.density(t, x, model);
    Vector ref(x.rows());
    bool have_ref = false;
    if (bp.spec.has_reference()) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) ref(i) = bp.spec.reference(t, x.row(i).data()) / bp.spec.reference_scale;
      have_ref = true;
    } else if (bp.curie_weiss && m == grid.steps()) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) ref(i) = cw_invariant_density(*bp.curie_weiss, x(i, 0), bp.cw_normalizer);
      have_ref = true;
    } else if (m == 0 && bp.spec.initial_density) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) ref(i) = bp.spec.initial_density(x.row(i).data());
      have_ref = true;
    }
    write_density_slice(os, t, x, model, have_ref ? &ref : nullptr, header);
    header = false;
  }
}

// -------------------------------------------------------------- posterior

struct PosteriorEstimate {
  double alpha = 0.0;
  double c0 = 0.0;
  double h_self = 0.0;
  double bound = 0.0;
};

/// H_alpha(mu, Phi(mu)) for the model flow mu, and the bound it implies.
inline PosteriorEstimate posterior_estimate(const ProblemSpec& problem, const ModelView& view, const TimeGrid& grid,
                                            std::size_t samples, double alpha_factor, std::uint64_t seed) {
  if (!std::isfinite(problem.lipschitz)) throw ConfigError("posterior estimate needs a Lipschitz constant");
  PosteriorEstimate out;
  out.c0 = posterior_c0(problem.lipschitz, grid.horizon());
  out.alpha = alpha_factor * out.c0;
  std::vector<Matrix> mu(grid.nodes());
  for (std::size_t m = 0; m < grid.nodes(); ++m) {
    CounterRng rng(seed, 0, Lane::diagnostics, 2, m);
    mu[m] = view.sample(grid.time(m), samples, rng);
  }
  const Matrix start = sample_initial(problem, samples, seed, 1);
  const TrajectoryEnsemble phi = phi_map(problem, view, start, grid, seed ^ 0x9E37ULL);
  out.h_self = h_alpha(mu, phi.positions, out.alpha, grid, 64, seed);
  out.bound = posterior_bound(out.h_self, out.alpha, problem.lipschitz, grid.horizon());
  return out;
}

// -------------------------------------------------------------------- run

struct RunOutcome {
  int exit_code = 0;
  fs::path dir;
  std::string message;
  std::vector<MetricRow> final_metrics;
};

inline void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& command) {
  const std::string dump = dump_config(cfg);
  Json m;
  m["manifest_version"] = 1;
  m["command"] = command;
  m["config_sha1"] = git_blob_sha1(dump);
  m["seeds"] = {{"training", cfg.training.seed}};
  m["config"] = to_json(cfg);
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

inline void mark_incomplete(const fs::path& dir, const std::string& why) {
  std::ofstream(dir / "INCOMPLETE") << why << '\n';
}

/// Trains the configured model and writes the artifact directory. Numeric
/// aborts return exit code 1 and leave an INCOMPLETE marker.
inline RunOutcome run_experiment(const RunConfig& cfg, const fs::path& dir, std::ostream* progress = nullptr) {
  validate(cfg);
  RunOutcome out;
  out.dir = dir;
  set_worker_count(cfg.workers);
  fs::create_directories(dir);
  write_manifest(dir, cfg, "run");
  mark_incomplete(dir, "running");

  const BuiltProblem bp = build_problem(cfg.problem);
  const TimeGrid grid = build_grid(cfg.problem);
  std::unique_ptr<DensityModel> model = build_model(cfg, grid);
  Trainer trainer(bp.spec, *model, grid, build_train_config(cfg));

  std::ofstream log(dir / "epoch_log.csv");
  log << "epoch,loss,lr,seconds,clamped_logs,acceptance_rate,outer,stream,outside_points,truncated\n";
  log.precision(10);
  std::ofstream metrics(dir / "metrics.csv");
  write_metrics_header(metrics);
  const std::size_t total = cfg.training.epochs;
  const std::size_t outers = cfg.training.n_ada + 1;
  std::size_t done = 0;
  try {
    for (std::size_t a = 0; a < outers; ++a) {
      if (a > 0 && cfg.training.reset_adam) trainer.reset_optimizer();
      for (std::size_t n = 1; n <= total; ++n) {
        const EpochReport r = trainer.run_epoch(a, n);
        ++done;
        log << r.epoch << ',' << r.loss << ',' << r.lr << ',' << r.seconds << ',' << r.clamped_logs << ','
            << r.acceptance_rate << ',' << r.outer << ',' << r.stream << ',' << r.outside_points << ','
            << r.truncated << '\n';
        const bool last = a + 1 == outers && n == total;
        if (done % cfg.diagnostics.cadence == 0 || last) {
          ModelView view(*model, build_rectify(cfg));
          MetricContext ctx{&cfg, &bp, &grid, &view, trainer.last_ensemble() ? &*trainer.last_ensemble() : nullptr};
          auto rows = compute_metrics(ctx, done);
          for (const auto& row : rows) write_metric(metrics, row);
          metrics.flush();
          if (progress) {
            *progress << "epoch " << done;
            for (const auto& row : rows) *progress << "  " << row.metric << "=" << row.value;
            *progress << '\n';
          }
          if (last) out.final_metrics = std::move(rows);
        }
        if (cfg.diagnostics.checkpoint_every > 0 && done % cfg.diagnostics.checkpoint_every == 0) {
          fs::create_directories(dir / "checkpoints");
          save_checkpoint(dir / "checkpoints" / ("epoch_" + std::to_string(done)), *model,
                          trainer.optimizer_state(), a, n);
        }
      }
    }
    save_checkpoint(dir / "checkpoint", *model, trainer.optimizer_state(), cfg.training.n_ada, total);
    ModelView view(*model, build_rectify(cfg));
    std::ofstream slices(dir / "slices.csv");
    write_slices(slices, cfg, bp, grid, view, model->domain());
  } catch (const NumericError& e) {
    out.exit_code = 1;
    out.message = e.what();
  } catch (const SamplingFailure& e) {
    out.exit_code = 1;
    out.message = e.what();
  } catch (const DegenerateDensityError& e) {
    out.exit_code = 1;
    out.message = e.what();
  }
  if (out.exit_code != 0) {
    mark_incomplete(dir, "aborted after " + std::to_string(done) + " epochs: " + out.message);
    return out;
  }
  if (bp.clamps) {
    std::ofstream(dir / "kernel_clamps.txt") << bp.clamps->load() << '\n';
  }
  fs::remove(dir / "INCOMPLETE");
  return out;
}

/// All-pairs particle baseline: terminal KDE table and metrics.
inline RunOutcome run_baseline(const RunConfig& cfg, const fs::path& dir, std::size_t particles,
                               std::ostream* progress = nullptr) {
  validate(cfg);
  RunOutcome out;
  out.dir = dir;
  set_worker_count(cfg.workers);
  fs::create_directories(dir);
  write_manifest(dir, cfg, "baseline");
  mark_incomplete(dir, "running");
  const BuiltProblem bp = build_problem(cfg.problem);
  const TimeGrid grid = build_grid(cfg.problem);
  const MollifierSpec moll(cfg.training.mollifier, cfg.training.epsilon, cfg.problem.dim);
  const Box box = build_domain(cfg);
  try {
    PocOptions opt;
    opt.store_paths = false;
    const PocResult res = baseline_poc(bp.spec, particles, grid, moll, cfg.training.seed, opt);
    const EmpiricalView view = EmpiricalView::constant(EmpiricalMeasure(res.terminal), moll);
    const double t_end = grid.t_end();
    const Matrix x = axis_slice(box, cfg.diagnostics.slice_points);
    Vector kde;
    view.density(t_end, x, kde);
    std::ofstream table(dir / "baseline_density.csv");
    table << "t";
    for (Eigen::Index k = 0; k < x.cols(); ++k) table << ",x" << k;
    table << ",density\n";
    table.precision(17);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      table << t_end;
      for (Eigen::Index k = 0; k < x.cols(); ++k) table << ',' << x(i, k);
      table << ',' << kde(i) << '\n';
    }
    std::ofstream metrics(dir / "metrics.csv");
    write_metrics_header(metrics);
    std::vector<MetricRow> rows;
    if (bp.curie_weiss) {
      const CurieWeissParams cw = *bp.curie_weiss;
      const double z = bp.cw_normalizer;
      auto f = [&](double v) {
        Matrix p(1, 1);
        p(0, 0) = v;
        Vector o;
        view.density(t_end, p, o);
        return o(0);
      };
      rows.push_back({0, "invariant_l1", l1_distance_1d(f, [&](double v) { return cw_invariant_density(cw, v, z); },
                                                         box.lo[0], box.hi[0], 6000),
                      0.0});
    }
    if (bp.spec.has_reference()) {
      const auto& ref = bp.spec.reference;
      const Estimate e = relative_l2(view_density(view, t_end), [&](const double* p) { return ref(t_end, p); }, box,
                                     cfg.diagnostics.n_eval, bp.spec.reference_scale, cfg.training.seed);
      rows.push_back({0, "relative_l2", e.value, e.std_error});
    }
    rows.push_back({0, "second_moment", res.terminal.rowwise().squaredNorm().mean(), 0.0});
    for (const auto& r : rows) {
      write_metric(metrics, r);
      if (progress) *progress << r.metric << "=" << r.value << '\n';
    }
    out.final_metrics = std::move(rows);
  } catch (const NumericError& e) {
    out.exit_code = 1;
    out.message = e.what();
    mark_incomplete(dir, out.message);
    return out;
  }
  fs::remove(dir / "INCOMPLETE");
  return out;
}

/// Recomputes the configured metrics from an artifact directory's final
/// checkpoint; adds the posterior estimate when a Lipschitz constant is known.
inline std::vector<MetricRow> diagnose_artifacts(const fs::path& dir, std::size_t posterior_samples = 2000) {
  const RunConfig cfg = load_run_config((dir / "manifest.json").string());
  set_worker_count(cfg.workers);
  const BuiltProblem bp = build_problem(cfg.problem);
  const TimeGrid grid = build_grid(cfg.problem);
  std::unique_ptr<DensityModel> model = build_model(cfg, grid);
  const CheckpointInfo info = load_checkpoint(dir / "checkpoint", *model);
  ModelView view(*model, build_rectify(cfg));
  MetricContext ctx{&cfg, &bp, &grid, &view, nullptr};
  const std::size_t epoch = (info.outer + 1) * info.epoch;
  std::vector<MetricRow> rows = compute_metrics(ctx, epoch);
  if (std::isfinite(bp.spec.lipschitz)) {
    const PosteriorEstimate pe = posterior_estimate(bp.spec, view, grid, posterior_samples, 5.0, cfg.training.seed);
    rows.push_back({epoch, "posterior_h_alpha", pe.h_self, 0.0});
    rows.push_back({epoch, "posterior_bound", pe.bound, 0.0});
  }
  return rows;
}

}  // namespace deepspoc
