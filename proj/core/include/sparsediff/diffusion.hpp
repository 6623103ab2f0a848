#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sparsediff/denoiser.hpp"
#include "sparsediff/rng.hpp"
#include "sparsediff/tensor.hpp"
#include "sparsediff/topology.hpp"

namespace sparsediff::diffusion {

/// Raised when a sampling path produces values far outside the expected
/// normalized data range (e.g. an untrained or diverged denoiser).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Discrete noising schedule. Index n counts applied noising steps, so
/// alpha_bar[0] == 1 (identity) and beta[0] is an unused placeholder; the
/// usable betas live at n = 1..N-1. sigma[n] is the posterior reverse
/// standard deviation (sigma[1] == 0).
struct NoiseSchedule {
  int64_t n_steps = 0;
  std::vector<double> beta, alpha, alpha_bar, sigma;

  static NoiseSchedule linear(int64_t n_steps, double beta_start = 1e-4,
                              double beta_end = 0.02);
};

enum class GuidanceMode { kX0Estimate, kNoisedTarget };

struct GuidanceConfig {
  double zeta = 1.0;          // observation precision 1/sigma^2
  double n_start_frac = 0.3;  // warm-start depth as a fraction of n_steps
  GuidanceMode mode = GuidanceMode::kX0Estimate;

  void validate() const;
};

/// x_n = sqrt(alpha_bar_n) x0 + sqrt(1 - alpha_bar_n) eps.
Tensor forward_noising(const Tensor& x0, int64_t n, const Tensor& eps,
                       const NoiseSchedule& schedule);

/// Mean noise-prediction squared error over a (B, C, H, W) batch; one
/// uniformly drawn step index per sample. Tape-building (for training).
ad::Var ddpm_loss(const Tensor& batch, const Denoiser& denoiser,
                  const NoiseSchedule& schedule, Rng& rng,
                  Rng* dropout_rng = nullptr);

/// One ancestral reverse step x_n -> x_{n-1}; n >= 1, no noise at n = 1.
Tensor reverse_step(const Tensor& x_n, int64_t n, const Denoiser& denoiser,
                    const NoiseSchedule& schedule, Rng& rng);

/// Full reverse chain from standard normal noise; shape is (C, H, W).
Tensor sample_unconditional(const std::vector<int64_t>& shape,
                            const Denoiser& denoiser,
                            const NoiseSchedule& schedule, Rng& rng);

struct FilledField {
  Tensor field;  // (C, h, w): each cell carries its region's probe value
  Tensor mask;   // (h, w): 1 where a region supplied a value (all-ones)
};

/// Broadcast each probe's value at the given lookback frame across its
/// governing region.
FilledField fill_regions(const topology::ProbeGraph& graph,
                         int64_t frame_index);

/// Warm-started guided reconstruction of the full field from probe values.
Tensor guided_reconstruct(const topology::ProbeGraph& graph,
                          int64_t frame_index, const Denoiser& denoiser,
                          const NoiseSchedule& schedule,
                          const GuidanceConfig& guidance, Rng& rng);

/// Same reconstruction driven by an explicit filled field + mask (used when
/// probe values come from a rollout rather than a stored graph window).
Tensor guided_reconstruct_field(const FilledField& filled,
                                const Denoiser& denoiser,
                                const NoiseSchedule& schedule,
                                const GuidanceConfig& guidance, Rng& rng);

}  // namespace sparsediff::diffusion
