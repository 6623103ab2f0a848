#pragma once

#include <cstdint>
#include <vector>

#include "sparsediff/autodiff.hpp"
#include "sparsediff/nn.hpp"
#include "sparsediff/rng.hpp"
#include "sparsediff/tensor.hpp"

namespace sparsediff::diffusion {

struct DenoiserConfig {
  int64_t data_channels = 2;
  int64_t base_channels = 16;
  std::vector<int64_t> ch_mults{1, 2, 2};
  int64_t blocks_per_level = 2;
  int64_t time_embed_dim = 64;
  int64_t norm_groups = 8;
  double dropout = 0.0;

  void validate() const;
  int64_t levels() const { return static_cast<int64_t>(ch_mults.size()); }
};

/// GroupNorm -> SiLU -> conv3x3 -> +time bias -> GroupNorm -> SiLU ->
/// dropout -> conv3x3, with a 1x1 projection on the residual branch when the
/// channel count changes.
struct ResBlock {
  ad::Var gn1_g, gn1_b, conv1_w, conv1_b;
  nn::Linear time_proj;  // time embedding -> per-channel bias
  ad::Var gn2_g, gn2_b, conv2_w, conv2_b;
  ad::Var skip_w, skip_b;
  int64_t c_in = 0, c_out = 0;
  int64_t groups = 8;
  double dropout = 0.0;

  ResBlock() = default;
  ResBlock(int64_t c_in, int64_t c_out, int64_t time_dim, int64_t groups,
           double dropout, Rng& rng);
  ad::Var operator()(const ad::Var& x, const ad::Var& temb,
                     Rng* dropout_rng) const;
  std::vector<ad::Var> params() const;
};

/// Single-head spatial self-attention over the flattened grid (batch of 1).
struct AttentionBlock {
  ad::Var gn_g, gn_b, wq, wk, wv, wo;
  int64_t channels = 0;
  int64_t groups = 8;

  AttentionBlock() = default;
  AttentionBlock(int64_t channels, int64_t groups, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;
  std::vector<ad::Var> params() const;
};

/// Multi-scale encoder-decoder noise predictor with skip connections and
/// self-attention at the coarsest resolution. Input and output are
/// (1, C, H, W); H and W must be divisible by 2^(levels-1).
struct Denoiser {
  DenoiserConfig cfg;
  nn::Mlp time_mlp;  // embed_dim -> embed_dim
  ad::Var in_w, in_b;
  std::vector<std::vector<ResBlock>> down_blocks;  // one vector per level
  ResBlock mid1, mid2;
  AttentionBlock mid_attn;
  std::vector<std::vector<ResBlock>> up_blocks;
  ad::Var out_gn_g, out_gn_b, out_w, out_b;

  ad::Var forward(const ad::Var& x, int64_t step, Rng* dropout_rng) const;
  /// Tape-free prediction for sampling paths; x is (C, H, W) or (1, C, H, W).
  Tensor infer(const Tensor& x, int64_t step) const;
  std::vector<ad::Var> params() const;
  int64_t param_count() const;
};

Denoiser make_denoiser(const DenoiserConfig& cfg, Rng& rng);

/// Standard sinusoidal position embedding of a diffusion step index.
Tensor sinusoidal_embedding(int64_t step, int64_t dim);

}  // namespace sparsediff::diffusion
