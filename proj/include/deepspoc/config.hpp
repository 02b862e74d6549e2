#pragma once

// Run configuration: JSON schema, validation and the named presets.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepspoc/adam.hpp"
#include "deepspoc/error.hpp"
#include "deepspoc/mollified_measures.hpp"
#include "deepspoc/nn.hpp"
#include "deepspoc/objectives.hpp"
#include "deepspoc/training_sets.hpp"

namespace deepspoc {

using Json = nlohmann::ordered_json;

enum class ProblemKind { pme, pme_ode, keller_segel, curie_weiss, fpme, linear };

inline std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::pme: return "pme";
    case ProblemKind::pme_ode: return "pme_ode";
    case ProblemKind::keller_segel: return "keller_segel";
    case ProblemKind::curie_weiss: return "curie_weiss";
    case ProblemKind::fpme: return "fpme";
    case ProblemKind::linear: return "linear";
  }
  return "unknown";
}

struct ProblemConfig {
  ProblemKind kind = ProblemKind::pme;
  std::size_t dim = 1;
  double t0 = 1.0;
  double horizon = 1.0;
  double dt = 0.01;
  // porous medium and the FPME initial law
  double m = 3.0;
  double C = 0.11547005383792516;  // sqrt(3)/15
  // Keller-Segel
  std::size_t n_g = 500;
  double delta_cut = 1e-3;
  bool per_particle = false;
  std::string initial = "gaussian";
  // Curie-Weiss
  double beta = 1.0;
  double coupling = -0.1;
  std::size_t mean_samples = 100;
  // fractional porous medium
  double stable_alpha = 1.0;
  double initial_m = 2.0;
  // linear problem
  double lipschitz = 1.0;

  bool operator==(const ProblemConfig&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  double half_width = 2.0;  ///< Omega_0 = [-h, h]^d
  std::vector<std::size_t> hidden = std::vector<std::size_t>(6, 512);
  Activation activation = Activation::relu;
  double softplus_beta = 20.0;
  double output_scale = 0.1;
  std::size_t basis_per_axis = 64;
  std::size_t quadrature_per_axis = 0;  ///< 0: default
  std::size_t blocks = 6;
  double scale_limit = 4.0;

  bool operator==(const ModelConfig&) const = default;
};

struct TrainingConfig {
  std::size_t particles = 1000;
  std::size_t epochs = 1000;
  std::size_t n_ada = 0;
  LossKind loss = LossKind::sq;
  TrainingSetPolicy policy;
  Schedule schedule;
  KernelKind mollifier = KernelKind::gaussian;
  double epsilon = 0.01;
  std::uint64_t seed = 0;
  bool reset_adam = true;
  bool divide_by_nodes = false;
  bool truncate = true;
  double log_floor = 1e-12;
  std::size_t rectify_mc_points = 100000;
  std::size_t rectify_scan_per_axis = 512;

  bool operator==(const TrainingConfig&) const = default;
};

struct DiagnosticsConfig {
  std::vector<std::string> metrics;
  std::size_t cadence = 100;       ///< metrics every this many epochs (and at the last)
  std::size_t n_eval = 100000;     ///< N_e
  std::size_t slice_points = 401;
  std::size_t checkpoint_every = 0;  ///< 0: only the final checkpoint
  std::size_t baseline_particles = 100000;

  bool operator==(const DiagnosticsConfig&) const = default;
};

struct RunConfig {
  std::string preset;  ///< informational
  ProblemConfig problem;
  ModelConfig model;
  TrainingConfig training;
  DiagnosticsConfig diagnostics;
  std::string output;
  std::size_t workers = 1;

  bool operator==(const RunConfig&) const = default;
};

// ------------------------------------------------------------- validation

inline void validate(const RunConfig& c) {
  const auto& p = c.problem;
  if (p.dim == 0) throw ConfigError("problem.dim: must be at least 1");
  if (!(p.dt > 0.0)) throw ConfigError("problem.dt: must be positive");
  if (!(p.horizon > 0.0)) throw ConfigError("problem.horizon: must be positive");
  if ((p.kind == ProblemKind::pme || p.kind == ProblemKind::pme_ode) && !(p.t0 > 0.0)) {
    throw ConfigError("problem.t0: porous medium runs need t0 > 0");
  }
  if (p.kind == ProblemKind::keller_segel && p.dim < 2) throw ConfigError("problem.dim: Keller-Segel needs d >= 2");
  if ((p.kind == ProblemKind::curie_weiss || p.kind == ProblemKind::linear || p.kind == ProblemKind::fpme) &&
      p.dim != 1) {
    throw ConfigError("problem.dim: this problem is one-dimensional");
  }
  if (p.initial != "gaussian" && p.initial != "mixture") {
    throw ConfigError("problem.initial: expected 'gaussian' or 'mixture'");
  }
  if (!(c.training.epsilon > 0.0)) throw ConfigError("training.epsilon: must be positive");
  if (!(c.training.schedule.gamma > 0.0 && c.training.schedule.gamma <= 1.0)) {
    throw ConfigError("training.schedule.gamma: must lie in (0, 1]");
  }
  c.training.schedule.validate();
  c.training.policy.validate(c.training.particles);
  if (c.training.particles == 0) throw ConfigError("training.particles: must be positive");
  if (c.training.epochs == 0) throw ConfigError("training.epochs: must be positive");
  if (!(c.model.half_width > 0.0)) throw ConfigError("model.half_width: must be positive");
  if (c.model.kind == ModelKind::mlp && c.model.hidden.empty()) throw ConfigError("model.hidden: needs a layer");
  if (c.training.loss == LossKind::path && c.model.kind != ModelKind::flow) {
    throw ConfigError("training.loss: path loss needs model.kind = flow");
  }
  if (p.kind == ProblemKind::pme_ode && c.model.kind == ModelKind::mlp && c.model.activation == Activation::relu) {
    throw ConfigError("model.activation: the deterministic particle method needs a smooth activation");
  }
  if (c.diagnostics.cadence == 0) throw ConfigError("diagnostics.cadence: must be positive");
  const std::set<std::string> known{"relative_l2", "w1", "second_moment_slope", "mass", "invariant_l1"};
  for (const auto& m : c.diagnostics.metrics) {
    if (!known.count(m)) throw ConfigError("diagnostics.metrics: unknown metric '" + m + "'");
  }
  if (c.workers == 0) throw ConfigError("workers: must be at least 1");
}

// ----------------------------------------------------------- JSON mapping

namespace detail {

/// Reads fields of one JSON object and rejects keys that were never read.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const std::string& field) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError(field + ": unknown value '" + s + "'");
}

inline std::string to_string(KernelKind k) { return k == KernelKind::gaussian ? "gaussian" : "triangular"; }
inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::step ? "step" : "harmonic"; }

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  const auto& p = c.problem;
  const auto& m = c.model;
  const auto& t = c.training;
  const auto& d = c.diagnostics;
  Json j;
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["problem"] = {{"kind", to_string(p.kind)}, {"dim", p.dim},           {"t0", p.t0},
                  {"horizon", p.horizon},      {"dt", p.dt},             {"m", p.m},
                  {"C", p.C},                  {"n_g", p.n_g},           {"delta_cut", p.delta_cut},
                  {"per_particle", p.per_particle}, {"initial", p.initial}, {"beta", p.beta},
                  {"coupling", p.coupling},    {"mean_samples", p.mean_samples},
                  {"stable_alpha", p.stable_alpha}, {"initial_m", p.initial_m}, {"lipschitz", p.lipschitz}};
  j["model"] = {{"kind", to_string(m.kind)},
                {"half_width", m.half_width},
                {"hidden", m.hidden},
                {"activation", to_string(m.activation)},
                {"softplus_beta", m.softplus_beta},
                {"output_scale", m.output_scale},
                {"basis_per_axis", m.basis_per_axis},
                {"quadrature_per_axis", m.quadrature_per_axis},
                {"blocks", m.blocks},
                {"scale_limit", m.scale_limit}};
  j["training"] = {{"particles", t.particles},
                   {"epochs", t.epochs},
                   {"n_ada", t.n_ada},
                   {"loss", to_string(t.loss)},
                   {"policy",
                    {{"mode", to_string(t.policy.mode)},
                     {"n_uniform", t.policy.n_uniform},
                     {"n_adaptive", t.policy.n_adaptive},
                     {"noise", t.policy.noise}}},
                   {"schedule",
                    {{"alpha0", t.schedule.alpha0},
                     {"gamma", t.schedule.gamma},
                     {"step_size", t.schedule.step_size},
                     {"kind", detail::to_string(t.schedule.kind)}}},
                   {"mollifier", detail::to_string(t.mollifier)},
                   {"epsilon", t.epsilon},
                   {"seed", t.seed},
                   {"reset_adam", t.reset_adam},
                   {"divide_by_nodes", t.divide_by_nodes},
                   {"truncate", t.truncate},
                   {"log_floor", t.log_floor},
                   {"rectify_mc_points", t.rectify_mc_points},
                   {"rectify_scan_per_axis", t.rectify_scan_per_axis}};
  j["diagnostics"] = {{"metrics", d.metrics},
                      {"cadence", d.cadence},
                      {"n_eval", d.n_eval},
                      {"slice_points", d.slice_points},
                      {"checkpoint_every", d.checkpoint_every},
                      {"baseline_particles", d.baseline_particles}};
  j["output"] = c.output;
  j["workers"] = c.workers;
  return j;
}

RunConfig preset_config(const std::string& name);

/// Parses a configuration document. A "preset" key seeds the defaults from
/// that preset; otherwise a "problem" block is mandatory.
inline RunConfig from_json(const Json& j) {
  using detail::ObjectReader;
  ObjectReader root(j, "");
  RunConfig c;
  std::string preset;
  root.read("preset", preset);
  if (!preset.empty()) {
    c = preset_config(preset);
  } else if (!root.has("problem")) {
    throw ConfigError("problem: block is mandatory when no preset is named");
  }
  c.preset = preset;

  if (const Json* pj = root.child("problem")) {
    ObjectReader r(*pj, "problem");
    auto& p = c.problem;
    std::string kind = to_string(p.kind);
    r.read("kind", kind);
    p.kind = detail::parse_enum(kind,
                                {ProblemKind::pme, ProblemKind::pme_ode, ProblemKind::keller_segel,
                                 ProblemKind::curie_weiss, ProblemKind::fpme, ProblemKind::linear},
                                "problem.kind");
    r.read("dim", p.dim);
    r.read("t0", p.t0);
    r.read("horizon", p.horizon);
    r.read("dt", p.dt);
    r.read("m", p.m);
    r.read("C", p.C);
    r.read("n_g", p.n_g);
    r.read("delta_cut", p.delta_cut);
    r.read("per_particle", p.per_particle);
    r.read("initial", p.initial);
    r.read("beta", p.beta);
    r.read("coupling", p.coupling);
    r.read("mean_samples", p.mean_samples);
    r.read("stable_alpha", p.stable_alpha);
    r.read("initial_m", p.initial_m);
    r.read("lipschitz", p.lipschitz);
    r.finish();
  }
  if (const Json* mj = root.child("model")) {
    ObjectReader r(*mj, "model");
    auto& m = c.model;
    std::string kind = to_string(m.kind), act = to_string(m.activation);
    r.read("kind", kind);
    m.kind = detail::parse_enum(kind, {ModelKind::fourier, ModelKind::mlp, ModelKind::flow}, "model.kind");
    r.read("half_width", m.half_width);
    r.read("hidden", m.hidden);
    r.read("activation", act);
    m.activation = detail::parse_enum(act, {Activation::relu, Activation::softplus, Activation::tanh},
                                      "model.activation");
    r.read("softplus_beta", m.softplus_beta);
    r.read("output_scale", m.output_scale);
    r.read("basis_per_axis", m.basis_per_axis);
    r.read("quadrature_per_axis", m.quadrature_per_axis);
    r.read("blocks", m.blocks);
    r.read("scale_limit", m.scale_limit);
    r.finish();
  }
  if (const Json* tj = root.child("training")) {
    ObjectReader r(*tj, "training");
    auto& t = c.training;
    std::string loss = to_string(t.loss), moll = detail::to_string(t.mollifier);
    r.read("particles", t.particles);
    r.read("epochs", t.epochs);
    r.read("n_ada", t.n_ada);
    r.read("loss", loss);
    t.loss = detail::parse_enum(loss, {LossKind::sq, LossKind::kl, LossKind::path}, "training.loss");
    if (const Json* pj = r.child("policy")) {
      ObjectReader q(*pj, "training.policy");
      std::string mode = to_string(t.policy.mode);
      q.read("mode", mode);
      t.policy.mode = detail::parse_enum(mode,
                                         {SetMode::uniform, SetMode::adaptive_union, SetMode::model_importance,
                                          SetMode::kde_importance, SetMode::particle_paths},
                                         "training.policy.mode");
      q.read("n_uniform", t.policy.n_uniform);
      q.read("n_adaptive", t.policy.n_adaptive);
      q.read("noise", t.policy.noise);
      q.finish();
    }
    if (const Json* sj = r.child("schedule")) {
      ObjectReader q(*sj, "training.schedule");
      std::string kind = detail::to_string(t.schedule.kind);
      q.read("alpha0", t.schedule.alpha0);
      q.read("gamma", t.schedule.gamma);
      q.read("step_size", t.schedule.step_size);
      q.read("kind", kind);
      if (kind == "step") {
        t.schedule.kind = ScheduleKind::step;
      } else if (kind == "harmonic") {
        t.schedule.kind = ScheduleKind::harmonic;
      } else {
        throw ConfigError("training.schedule.kind: unknown value '" + kind + "'");
      }
      q.finish();
    }
    r.read("mollifier", moll);
    if (moll == "gaussian") {
      t.mollifier = KernelKind::gaussian;
    } else if (moll == "triangular") {
      t.mollifier = KernelKind::triangular;
    } else {
      throw ConfigError("training.mollifier: unknown value '" + moll + "'");
    }
    r.read("epsilon", t.epsilon);
    r.read("seed", t.seed);
    r.read("reset_adam", t.reset_adam);
    r.read("divide_by_nodes", t.divide_by_nodes);
    r.read("truncate", t.truncate);
    r.read("log_floor", t.log_floor);
    r.read("rectify_mc_points", t.rectify_mc_points);
    r.read("rectify_scan_per_axis", t.rectify_scan_per_axis);
    r.finish();
  }
  if (const Json* dj = root.child("diagnostics")) {
    ObjectReader r(*dj, "diagnostics");
    auto& d = c.diagnostics;
    r.read("metrics", d.metrics);
    r.read("cadence", d.cadence);
    r.read("n_eval", d.n_eval);
    r.read("slice_points", d.slice_points);
    r.read("checkpoint_every", d.checkpoint_every);
    r.read("baseline_particles", d.baseline_particles);
    r.finish();
  }
  root.read("output", c.output);
  root.read("workers", c.workers);
  root.finish();
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ConfigError("problem: block is mandatory (the document is empty)");
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string dump_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

// ---------------------------------------------------------------- presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"pme1d",     "pme3d",     "pme5d",      "pme6d",
                                              "pme8d",     "pme1d_ode", "pme3d_ode",  "ks2d_gauss",
                                              "ks2d_mix",  "cw1d",      "fpme1d",     "linear1d"};
  return names;
}

inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  auto& p = c.problem;
  auto& m = c.model;
  auto& t = c.training;
  auto& d = c.diagnostics;
  t.schedule = Schedule{1e-3, 0.5, 500, ScheduleKind::step};
  m.kind = ModelKind::mlp;
  m.hidden = std::vector<std::size_t>(6, 512);
  m.activation = Activation::relu;

  auto pme = [&](std::size_t dim, double t0, double horizon, double dt, double half) {
    p.kind = ProblemKind::pme;
    p.dim = dim;
    p.m = 3.0;
    p.C = std::sqrt(3.0) / 15.0;
    p.t0 = t0;
    p.horizon = horizon;
    p.dt = dt;
    m.half_width = half;
    d.metrics = {"relative_l2"};
  };

  if (name == "pme1d" || name == "pme1d_ode") {
    pme(1, 1.0, 1.0, 0.01, 2.0);
    t.particles = 1000;
    t.policy = {SetMode::uniform, 1000, 0, 0.0};
    t.epsilon = 0.01;
    t.epochs = 7000;
    d.metrics = {"relative_l2", "w1"};
  } else if (name == "pme3d" || name == "pme3d_ode") {
    pme(3, 0.1, 0.2, 0.005, 2.0);
    t.particles = 4000;
    t.policy = {SetMode::adaptive_union, 2000, 2000, 0.2};
    t.epsilon = 0.02;
    t.epochs = 8000;
  } else if (name == "pme5d") {
    pme(5, 1.0, 1.0, 0.02, 3.0);
    t.particles = 8000;
    t.policy = {SetMode::adaptive_union, 2000, 4000, 0.3};
    t.epsilon = 0.05;
    t.schedule.gamma = 0.7;
    t.epochs = 12000;
  } else if (name == "pme6d" || name == "pme8d") {
    pme(name == "pme6d" ? 6 : 8, 1.0, 1.5, 0.025, 3.0);
    m.kind = ModelKind::flow;
    m.hidden = {64, 64};
    m.activation = Activation::tanh;
    t.loss = LossKind::path;
    t.particles = 10000;
    t.policy = {SetMode::particle_paths, 0, 0, 0.0};
    t.epsilon = 0.05;
    t.epochs = 5000;
  } else if (name == "ks2d_gauss" || name == "ks2d_mix") {
    p.kind = ProblemKind::keller_segel;
    p.dim = 2;
    p.t0 = 0.0;
    p.horizon = 0.2;
    p.dt = 0.01;
    p.n_g = 500;
    p.initial = name == "ks2d_gauss" ? "gaussian" : "mixture";
    m.half_width = 4.0;
    t.particles = 2000;
    t.policy = {SetMode::uniform, 2000, 0, 0.0};
    t.schedule.gamma = 0.7;
    t.epsilon = 0.02;
    t.epochs = 8000;
    d.metrics = {"second_moment_slope"};
  } else if (name == "cw1d") {
    p.kind = ProblemKind::curie_weiss;
    p.dim = 1;
    p.t0 = 0.0;
    p.horizon = 10.0;
    p.dt = 0.01;
    m.half_width = 3.0;
    t.particles = 1000;
    t.policy = {SetMode::uniform, 1000, 0, 0.0};
    t.epsilon = 0.01;
    t.epochs = 5000;
    d.metrics = {"invariant_l1"};
  } else if (name == "fpme1d") {
    p.kind = ProblemKind::fpme;
    p.dim = 1;
    p.t0 = 1.0;
    p.horizon = 0.5;
    p.dt = 0.01;
    p.m = 2.0;
    p.initial_m = 2.0;
    p.stable_alpha = 1.0;
    m.half_width = 3.0;
    t.particles = 2000;
    t.policy = {SetMode::uniform, 2000, 0, 0.0};
    t.epsilon = 0.01;
    t.epochs = 5000;
    d.metrics = {"mass"};
  } else if (name == "linear1d") {
    p.kind = ProblemKind::linear;
    p.dim = 1;
    p.t0 = 0.0;
    p.horizon = 1.0;
    p.dt = 0.01;
    p.lipschitz = 1.0;
    m.half_width = 4.0;
    t.particles = 1000;
    t.policy = {SetMode::uniform, 1000, 0, 0.0};
    t.epsilon = 0.05;
    t.epochs = 500;
    d.metrics = {};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  if (name == "pme1d_ode" || name == "pme3d_ode") {
    p.kind = ProblemKind::pme_ode;
    m.activation = Activation::softplus;
    m.softplus_beta = 20.0;
  }
  validate(c);
  return c;
}

}  // namespace deepspoc
