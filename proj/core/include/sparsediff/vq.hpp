#pragma once

#include <cstdint>
#include <vector>

#include "sparsediff/grid.hpp"
#include "sparsediff/nn.hpp"

namespace sparsediff::vq {

/// K learnable d-dimensional codewords plus per-codeword hit counters.
struct Codebook {
  ad::Var codewords;  // (K, d)
  std::vector<int64_t> usage_counts;

  int64_t K() const { return codewords->value.dim(0); }
  int64_t d() const { return codewords->value.dim(1); }
};

/// Pixel-wise temporal encoder: a length-l scalar series per channel,
/// channels concatenated, mapped to a d-dimensional latent. Feature layout
/// per pixel is [channel-major]: index c*l + t.
struct TemporalEncoder {
  nn::Mlp net;  // (l*C -> hidden -> d)
  int64_t lookback = 0;
  int64_t channels = 0;
  int64_t latent_dim = 0;
};

/// VQ pretraining decoder mirroring the encoder (d -> hidden -> l*C).
struct VQDecoder {
  nn::Mlp net;
};

struct VQAssignment {
  int64_t h = 0, w = 0;
  std::vector<int32_t> indices;  // h*w codeword ids, row-major
  std::vector<int32_t> hit_set;  // sorted distinct ids
};

struct VqModel {
  TemporalEncoder encoder;
  VQDecoder decoder;
  Codebook codebook;
};

struct VqTrainConfig {
  int64_t codebook_size = 64;
  int64_t latent_dim = 32;
  int64_t hidden_dim = 128;
  double beta_commit = 0.25;
  double lr = 1e-3;
  int64_t batch_pixels = 1024;
  int64_t steps = 2000;
  int64_t reseed_every = 200;  // dead-codeword reseed cadence, in steps
  uint64_t seed = 0;
};

/// Rearranges an (l, C, h, w) window into the (h*w, l*C) per-pixel matrix the
/// encoder consumes.
Tensor window_to_pixels(const Tensor& window);

/// encode_field: (l, C, h, w) window -> (h*w, d) latents; errors on a window
/// length that does not match the configured lookback.
Tensor encode_field(const Tensor& window, const TemporalEncoder& enc);

/// Nearest codeword per pixel under squared Euclidean distance, ties broken
/// by lowest index. Optionally emits the quantized latents.
VQAssignment quantize(const Tensor& latents, const Codebook& codebook,
                      int64_t h, int64_t w, Tensor* quantized = nullptr);

std::vector<int32_t> hit_codewords(const VQAssignment& assignment);

/// Eq.-4-style objective on the tape: reconstruction MSE + codeword fit +
/// beta * commitment, straight-through convention. Pixel terms are averaged
/// over the batch (squared norms over the latent dimension).
ad::Var vq_loss(const ad::Var& target_pixels, const ad::Var& reconstruction,
                const ad::Var& latents, const ad::Var& selected_codewords,
                double beta_commit);

struct VqTrainLog {
  std::vector<double> loss_per_step;
  int64_t reseeded_codewords = 0;
  int64_t param_count = 0;
};

VqModel train_codebook(const std::vector<Trajectory>& dataset, int64_t lookback,
                       const VqTrainConfig& config, VqTrainLog* log = nullptr);

/// Fresh (untrained) model with the given shapes; used by loaders and tests.
VqModel make_vq_model(int64_t lookback, int64_t channels,
                      const VqTrainConfig& config, Rng& rng);

}  // namespace sparsediff::vq
