#pragma once

#include <string>
#include <vector>

#include "sparsediff/config.hpp"
#include "sparsediff/pipeline.hpp"

namespace sparsediff::harness {

/// One row of the fixed CSV schema shared by every comparison table.
struct Row {
  std::string system;
  std::string mode;
  int64_t probes = 0;
  uint64_t seed = 0;
  int64_t step = 0;
  double rmse = 0;
  double ssim = 0;
};

void write_csv(const std::string& path, const std::vector<Row>& rows);
std::vector<Row> read_csv(const std::string& path);

/// Probe-selection ablation (codebook vs uniform vs random placement, each
/// with its own trained predictor) plus the edge-weight on/off ablation, over
/// cfg.eval.seeds. Rollout fields are decoded with the cheap region-fill
/// path so the table isolates the probe topology's contribution.
std::vector<Row> run_ablation_suite(const config::ExperimentConfig& cfg,
                                    const pipeline::Paths& paths);

/// Codebook-size sweep and input-noise sweep (sigma = p% of the normalized
/// data amplitude, applied to encoder/rollout inputs only).
std::vector<Row> run_robustness_suite(const config::ExperimentConfig& cfg,
                                      const pipeline::Paths& paths);

struct TradeoffPoint {
  std::string mode;  // "never", "adaptive", or "interval_N"
  uint64_t seed = 0;
  double wall_s = 0;
  double final_rmse = 0;
  double final_ssim = 0;
};

/// Accuracy/cost trade-off of re-encoding cadence: mode never, adaptive, and
/// each fixed interval from cfg.eval.intervals, over the eval trajectories.
std::vector<TradeoffPoint> run_tradeoff_suite(
    const config::ExperimentConfig& cfg, const pipeline::Paths& paths);

void write_tradeoff(const std::string& path,
                    const std::vector<TradeoffPoint>& points);
std::vector<TradeoffPoint> read_tradeoff(const std::string& path);

/// Stage wrappers with the usual idempotence + CSV/plot artifacts.
void ablate(const config::ExperimentConfig& cfg, const pipeline::Paths& paths);
void tradeoff(const config::ExperimentConfig& cfg,
              const pipeline::Paths& paths);

}  // namespace sparsediff::harness
