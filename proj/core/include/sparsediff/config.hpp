#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sparsediff/grid.hpp"

namespace sparsediff::config {

/// Raised for malformed files, unknown keys, or bad override paths.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  int64_t n_train = 5;
  int64_t n_eval = 5;
  int64_t n_frames = 120;
  double solver_dt = 0.05;
  int64_t store_every = 1;
  int64_t ic_max_mode = 4;
};

struct CodebookConfig {
  int64_t size = 64;
  int64_t latent_dim = 32;
  int64_t hidden_dim = 128;
  double beta_commit = 0.25;
  double lr = 1e-3;
  int64_t batch_pixels = 1024;
  int64_t steps = 2000;
  int64_t reseed_every = 200;
};

struct PredictorConfig {
  int64_t feature_dim = 64;
  int64_t heads = 4;
  int64_t d_k = 16;
  int64_t hidden = 64;
  double ode_time = 1.0;
  int64_t substeps = 4;
  bool freeze_attention = false;
  bool use_edge_weights = true;
  bool sqrt_dk_scaling = false;
  double lr = 1e-3;
  int64_t steps = 2000;
  int64_t batch = 4;
};

struct DiffusionConfig {
  int64_t n_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int64_t base_channels = 16;
  std::vector<int64_t> ch_mults{1, 2, 2};
  int64_t blocks_per_level = 2;
  int64_t time_embed_dim = 64;
  int64_t norm_groups = 8;
  double dropout = 0.0;
  double lr = 1e-4;
  int64_t steps = 3000;
  int64_t batch = 4;
  double zeta = 1.0;
  double n_start_frac = 0.3;
  std::string guidance_mode = "x0-estimate";  // or "noised-target"
};

struct AdaptConfig {
  std::string mode = "adaptive";  // adaptive | fixed_interval | never
  double tau = 0.9;
  int64_t interval = 10;
  bool decode_on_reencode = true;
  int64_t decode_every = 1;
};

struct EvalConfig {
  int64_t horizon = 50;
  std::vector<int64_t> intervals{50, 25, 10, 5};
  std::vector<uint64_t> seeds{0, 1, 2};
  std::vector<double> noise_percents{0, 5, 10, 20};
  std::vector<int64_t> codebook_sizes{16, 32, 64, 96};
};

struct ExperimentConfig {
  std::string system = "lambda_omega";
  GridSpec grid;
  LambdaOmegaParams lambda_omega;
  NavierStokesParams navier_stokes;
  SwiftHohenbergParams swift_hohenberg;
  CylinderFlowParams cylinder_flow;
  DataConfig data;
  int64_t lookback = 10;
  CodebookConfig codebook;
  PredictorConfig predictor;
  DiffusionConfig diffusion;
  AdaptConfig adaptation;
  EvalConfig eval;
  uint64_t seed = 0;

  SystemParams system_params() const;
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& cfg);

/// Applies a dotted-path override like "adaptation.tau=0.8". The target key
/// must already exist; the value is parsed as JSON when possible, else kept
/// as a string.
ExperimentConfig apply_override(const ExperimentConfig& cfg,
                                const std::string& key_value);

/// FNV-1a over the canonical (sorted-key) serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace sparsediff::config
