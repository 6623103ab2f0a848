#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsediff/diffusion.hpp"
#include "sparsediff/predictor.hpp"
#include "sparsediff/tensor.hpp"
#include "sparsediff/topology.hpp"
#include "sparsediff/vq.hpp"

namespace sparsediff::adaptation {

enum class Mode { kAdaptive, kFixedInterval, kNever };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

struct AdaptationConfig {
  Mode mode = Mode::kAdaptive;
  double tau = 0.9;          // consistency threshold; triggers when chi < tau
  int64_t interval = 10;     // fixed-interval cadence, in steps
  bool decode_on_reencode = true;  // diffusion-decode the window at events
                                   // (false: cheap region-fill decode)
  int64_t decode_every = 1;  // full-field reconstruction cadence (0 = never)

  void validate() const;
};

struct ReencodeEvent {
  int64_t step = 0;
  int64_t probe_count = 0;
};

struct RolloutReport {
  Tensor predicted_fields;            // (n_decoded, C, h, w)
  std::vector<int64_t> decoded_steps;  // rollout step of each decoded field
  std::vector<Tensor> probe_trajectories;  // per step, (k_t, C)
  std::vector<double> chi_trace;           // per step, in [-1, 1]
  std::vector<ReencodeEvent> reencode_events;
  bool zero_norm_flagged = false;  // a chi term hit a zero-norm encoding
  double wall_predict_s = 0, wall_decode_s = 0, wall_reencode_s = 0;
};

struct Models {
  const vq::VqModel* vq = nullptr;
  const predictor::GrandModel* predictor = nullptr;
  const diffusion::Denoiser* denoiser = nullptr;
  const diffusion::NoiseSchedule* schedule = nullptr;
  diffusion::GuidanceConfig guidance;
};

/// Mean cosine similarity between each probe window's encoding and its
/// assigned codeword; zero-norm encodings contribute 0 and set the flag.
double latent_consistency(const topology::ProbeGraph& graph,
                          const vq::TemporalEncoder& encoder,
                          const vq::Codebook& codebook,
                          bool* zero_norm_flag = nullptr);

/// Encode -> quantize -> rebuild the probe graph from l full-grid frames.
topology::ProbeGraph reencode(const Tensor& recent_fields,
                              const vq::VqModel& model, uint64_t seed);

/// Guided reconstruction of every frame in the graph's lookback window;
/// returns (l, C, h, w). With guidance zeta = 0 and n_start_frac = 0 this
/// degenerates to the region-fill decode.
Tensor decode_window(const topology::ProbeGraph& graph,
                     const diffusion::Denoiser& denoiser,
                     const diffusion::NoiseSchedule& schedule,
                     const diffusion::GuidanceConfig& guidance, Rng& rng);

/// Autoregressive full-field forecast with test-time re-encoding.
/// `initial_window` is (l, C, h, w) ground truth; reproducibility is fixed by
/// `seed` (probe selection, diffusion sampling).
RolloutReport adaptive_rollout(const Tensor& initial_window, int64_t horizon,
                               const Models& models,
                               const AdaptationConfig& config, uint64_t seed);

void save_rollout_report(const std::string& dir, const RolloutReport& report);
RolloutReport load_rollout_report(const std::string& dir);

}  // namespace sparsediff::adaptation
