#pragma once

#include <stdexcept>
#include <string>

#include "sparsediff/adaptation.hpp"
#include "sparsediff/config.hpp"
#include "sparsediff/dataset.hpp"
#include "sparsediff/denoiser.hpp"
#include "sparsediff/predictor.hpp"
#include "sparsediff/vq.hpp"

namespace sparsediff::pipeline {

/// A stage was invoked before the stage that produces its inputs.
struct MissingDependency : std::runtime_error {
  MissingDependency(const std::string& artifact, std::string command)
      : std::runtime_error(artifact + " not found; run `" + command +
                           "` first"),
        required_command(std::move(command)) {}
  std::string required_command;
};

/// Artifacts live under <root>/<system>/<config-hash>/<stage>/.
struct Paths {
  std::string root;
  std::string system;
  std::string hash;

  std::string base() const { return root + "/" + system + "/" + hash; }
  std::string stage(const std::string& name) const {
    return base() + "/" + name;
  }
};

/// Output root resolution: --out flag, then $SPARSEDIFF_OUT, then "out".
Paths make_paths(const config::ExperimentConfig& cfg,
                 const std::string& out_flag);

int64_t system_channels(const std::string& system);

/// Derived per-module seed streams from the master seed.
uint64_t module_seed(uint64_t master, const std::string& module);

// Stages. Each is idempotent: when its artifacts already exist for this
// config hash it returns without recomputing.
void generate(const config::ExperimentConfig& cfg, const Paths& paths);
void train_codebook(const config::ExperimentConfig& cfg, const Paths& paths);
void train_predictor(const config::ExperimentConfig& cfg, const Paths& paths);
void train_diffusion(const config::ExperimentConfig& cfg, const Paths& paths);
void rollout(const config::ExperimentConfig& cfg, const Paths& paths);
void evaluate(const config::ExperimentConfig& cfg, const Paths& paths);
void plot(const config::ExperimentConfig& cfg, const Paths& paths);

// Artifact loaders (throw MissingDependency when absent).
std::vector<Trajectory> load_split(const config::ExperimentConfig& cfg,
                                   const Paths& paths, const std::string& split);
vq::VqModel load_codebook(const config::ExperimentConfig& cfg,
                          const Paths& paths);
predictor::GrandModel load_predictor(const config::ExperimentConfig& cfg,
                                     const Paths& paths);
diffusion::Denoiser load_denoiser(const config::ExperimentConfig& cfg,
                                  const Paths& paths);

// Shared model constructors so checkpoints always match rebuilt shapes.
vq::VqTrainConfig vq_train_config(const config::ExperimentConfig& cfg);
predictor::PredictorTrainConfig predictor_train_config(
    const config::ExperimentConfig& cfg);
diffusion::DenoiserConfig denoiser_config(const config::ExperimentConfig& cfg);
diffusion::NoiseSchedule noise_schedule(const config::ExperimentConfig& cfg);
diffusion::GuidanceConfig guidance_config(const config::ExperimentConfig& cfg);
adaptation::AdaptationConfig adaptation_config(
    const config::ExperimentConfig& cfg);

/// Training entry points shared with the ablation harness (no persistence).
vq::VqModel fit_codebook(const std::vector<Trajectory>& train,
                         const config::ExperimentConfig& cfg, uint64_t seed,
                         vq::VqTrainLog* log = nullptr);
predictor::GrandModel fit_predictor(
    const std::vector<std::pair<topology::ProbeGraph, Tensor>>& pairs,
    const config::ExperimentConfig& cfg, uint64_t seed,
    bool use_edge_weights = true, predictor::PredictorTrainLog* log = nullptr);

/// Teacher-forced (graph, next-step probe target) pairs over train windows,
/// capped at `max_pairs` by striding.
std::vector<std::pair<topology::ProbeGraph, Tensor>> build_predictor_pairs(
    const std::vector<Trajectory>& train, const vq::VqModel& vq_model,
    int64_t lookback, uint64_t seed, int64_t max_pairs = 512);

}  // namespace sparsediff::pipeline
