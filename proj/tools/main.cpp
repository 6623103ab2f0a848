#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "sparsediff/checkpoint.hpp"
#include "sparsediff/config.hpp"
#include "sparsediff/diffusion.hpp"
#include "sparsediff/harness.hpp"
#include "sparsediff/pipeline.hpp"
#include "sparsediff/systems.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingDep = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "experiment config file (JSON)");
  cmd->add_option("--out", f.out_dir,
                  "output root (default $SPARSEDIFF_OUT or ./out)");
  cmd->add_option("--seed", f.seed, "master seed override");
  cmd->add_option("--override", f.overrides,
                  "dotted-path config override, e.g. adaptation.tau=0.8");
}

sparsediff::config::ExperimentConfig resolve_config(const CommonFlags& f) {
  sparsediff::config::ExperimentConfig cfg =
      f.config_path.empty()
          ? sparsediff::config::ExperimentConfig{}
          : sparsediff::config::load_config(f.config_path);
  for (const std::string& kv : f.overrides)
    cfg = sparsediff::config::apply_override(cfg, kv);
  if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order forecasting of 2D spatiotemporal dynamics"};
  app.require_subcommand(1);

  const std::vector<std::string> stages = {
      "generate",      "train-codebook", "train-predictor",
      "train-diffusion", "rollout",      "evaluate",
      "ablate",        "tradeoff",       "plot"};
  std::map<std::string, CommonFlags> flags;
  for (const auto& name : stages) {
    CLI::App* cmd = app.add_subcommand(name);
    add_common(cmd, flags[name]);
  }

  CLI11_PARSE(app, argc, argv);
  std::string stage = app.get_subcommands().front()->get_name();
  const CommonFlags& f = flags[stage];

  try {
    sparsediff::config::ExperimentConfig cfg = resolve_config(f);
    sparsediff::pipeline::Paths paths =
        sparsediff::pipeline::make_paths(cfg, f.out_dir);

    if (stage == "generate") {
      sparsediff::pipeline::generate(cfg, paths);
    } else if (stage == "train-codebook") {
      sparsediff::pipeline::train_codebook(cfg, paths);
    } else if (stage == "train-predictor") {
      sparsediff::pipeline::train_predictor(cfg, paths);
    } else if (stage == "train-diffusion") {
      sparsediff::pipeline::train_diffusion(cfg, paths);
    } else if (stage == "rollout") {
      sparsediff::pipeline::rollout(cfg, paths);
    } else if (stage == "evaluate") {
      sparsediff::pipeline::evaluate(cfg, paths);
    } else if (stage == "ablate") {
      sparsediff::harness::ablate(cfg, paths);
    } else if (stage == "tradeoff") {
      sparsediff::harness::tradeoff(cfg, paths);
    } else if (stage == "plot") {
      sparsediff::pipeline::plot(cfg, paths);
    }
    std::printf("%s: done (%s)\n", stage.c_str(), paths.base().c_str());
    return kExitOk;
  } catch (const sparsediff::pipeline::MissingDependency& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingDep;
  } catch (const sparsediff::config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const sparsediff::checkpoint::CheckpointError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return kExitConfig;
  } catch (const sparsediff::systems::BlowupError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const sparsediff::diffusion::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
