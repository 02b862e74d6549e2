// Command-line front end: run, baseline, diagnose, export-plots, list-presets.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "deepspoc.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kNumeric = 1;
constexpr int kUsage = 2;

struct CommonFlags {
  std::string preset;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> workers;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--preset", f.preset, "named preset configuration");
  app->add_option("--config", f.config, "JSON configuration or run manifest");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--epochs", f.epochs, "epochs per outer iteration");
  app->add_option("--particles", f.particles, "particles per batch (K)");
  app->add_option("--workers", f.workers, "worker threads");
  app->add_option("--out", f.out, "artifact directory");
}

deepspoc::RunConfig resolve(const CommonFlags& f) {
  using namespace deepspoc;
  if (!f.preset.empty() && !f.config.empty()) throw ConfigError("use either --preset or --config, not both");
  RunConfig c;
  if (!f.config.empty()) {
    c = load_run_config(f.config);
  } else if (!f.preset.empty()) {
    c = preset_config(f.preset);
  } else {
    throw ConfigError("one of --preset or --config is required");
  }
  if (f.seed) c.training.seed = *f.seed;
  if (f.epochs) c.training.epochs = *f.epochs;
  if (f.particles) {
    c.training.particles = *f.particles;
    c.diagnostics.baseline_particles = *f.particles;
  }
  if (f.workers) c.workers = *f.workers;
  if (!f.out.empty()) c.output = f.out;
  validate(c);
  return c;
}

std::filesystem::path output_dir(const deepspoc::RunConfig& c, const std::string& suffix) {
  if (!c.output.empty()) return c.output;
  const std::string base = c.preset.empty() ? std::string("run") : c.preset;
  return deepspoc::default_output_root() / (base + suffix + "-seed" + std::to_string(c.training.seed));
}

int finish(const deepspoc::RunOutcome& r) {
  if (r.exit_code != 0) {
    std::cerr << "aborted: " << r.message << "\npartial artifacts kept in " << r.dir << '\n';
    return kNumeric;
  }
  std::cout << "artifacts written to " << r.dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deepspoc: deep sequential propagation of chaos solver"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::string baseline_kind;
  auto* run = app.add_subcommand("run", "train a density model on a problem");
  add_common(run, run_flags);
  run->add_option("--baseline", baseline_kind, "run a particle baseline instead (poc)");

  CommonFlags base_flags;
  auto* baseline = app.add_subcommand("baseline", "all-pairs particle reference solution");
  add_common(baseline, base_flags);

  std::string diag_dir;
  std::size_t posterior_samples = 2000;
  auto* diagnose = app.add_subcommand("diagnose", "recompute metrics from an artifact directory");
  diagnose->add_option("dir", diag_dir, "artifact directory")->required();
  diagnose->add_option("--posterior-samples", posterior_samples, "samples per node for the posterior estimate");

  std::string plot_dir;
  auto* plots = app.add_subcommand("export-plots", "write SVG figures for an artifact directory");
  plots->add_option("dir", plot_dir, "artifact directory")->required();

  auto* list = app.add_subcommand("list-presets", "print the preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (list->parsed()) {
      for (const auto& n : deepspoc::preset_names()) std::cout << n << '\n';
      return kOk;
    }
    if (run->parsed()) {
      const deepspoc::RunConfig cfg = resolve(run_flags);
      if (!baseline_kind.empty()) {
        if (baseline_kind != "poc") throw deepspoc::ConfigError("--baseline: only 'poc' is available");
        return finish(deepspoc::run_baseline(cfg, output_dir(cfg, "-poc"), cfg.diagnostics.baseline_particles,
                                             &std::cout));
      }
      return finish(deepspoc::run_experiment(cfg, output_dir(cfg, ""), &std::cout));
    }
    if (baseline->parsed()) {
      const deepspoc::RunConfig cfg = resolve(base_flags);
      return finish(deepspoc::run_baseline(cfg, output_dir(cfg, "-poc"), cfg.diagnostics.baseline_particles,
                                           &std::cout));
    }
    if (diagnose->parsed()) {
      for (const auto& r : deepspoc::diagnose_artifacts(diag_dir, posterior_samples)) {
        std::cout << r.metric << ',' << r.value << ',' << r.std_error << '\n';
      }
      return kOk;
    }
    if (plots->parsed()) {
      const auto files = deepspoc::export_plots(plot_dir, std::cerr);
      for (const auto& f : files) std::cout << f.string() << '\n';
      return kOk;
    }
  } catch (const deepspoc::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const deepspoc::HypothesisViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const deepspoc::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const deepspoc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
