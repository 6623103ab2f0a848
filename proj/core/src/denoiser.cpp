#include "sparsediff/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsediff::diffusion {

namespace {

ad::Var conv_param(int64_t co, int64_t ci, int64_t k, Rng& rng, bool zero) {
  Tensor w({co, ci, k, k});
  if (!zero) {
    double s = std::sqrt(2.0 / static_cast<double>(ci * k * k));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = s * rng.normal();
  }
  return ad::param(std::move(w));
}

ad::Var zeros_param(std::vector<int64_t> shape) {
  return ad::param(Tensor(std::move(shape)));
}

ad::Var ones_param(int64_t n) {
  Tensor t({n});
  t.vec().setOnes();
  return ad::param(std::move(t));
}

int64_t fit_groups(int64_t channels, int64_t groups) {
  int64_t g = std::min(groups, channels);
  while (channels % g != 0) --g;
  return g;
}

void append(std::vector<ad::Var>& dst, const std::vector<ad::Var>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

void DenoiserConfig::validate() const {
  if (data_channels < 1 || base_channels < 1 || blocks_per_level < 1)
    throw std::invalid_argument("DenoiserConfig: positive sizes required");
  if (ch_mults.empty())
    throw std::invalid_argument("DenoiserConfig: ch_mults empty");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
    throw std::invalid_argument("DenoiserConfig: time_embed_dim must be even");
  if (norm_groups < 1)
    throw std::invalid_argument("DenoiserConfig: norm_groups < 1");
  if (dropout < 0 || dropout >= 1)
    throw std::invalid_argument("DenoiserConfig: dropout out of range");
}

ResBlock::ResBlock(int64_t c_in, int64_t c_out, int64_t time_dim,
                   int64_t groups, double dropout, Rng& rng)
    : c_in(c_in), c_out(c_out), groups(groups), dropout(dropout) {
  gn1_g = ones_param(c_in);
  gn1_b = zeros_param({c_in});
  conv1_w = conv_param(c_out, c_in, 3, rng, false);
  conv1_b = zeros_param({c_out});
  time_proj = nn::Linear(time_dim, c_out, rng);
  gn2_g = ones_param(c_out);
  gn2_b = zeros_param({c_out});
  // Zero-init on the second conv so each block starts as an identity map.
  conv2_w = conv_param(c_out, c_out, 3, rng, true);
  conv2_b = zeros_param({c_out});
  if (c_in != c_out) {
    skip_w = conv_param(c_out, c_in, 1, rng, false);
    skip_b = zeros_param({c_out});
  }
}

ad::Var ResBlock::operator()(const ad::Var& x, const ad::Var& temb,
                             Rng* dropout_rng) const {
  ad::Var h = ad::silu(ad::group_norm(x, gn1_g, gn1_b,
                                      static_cast<int>(fit_groups(c_in, groups))));
  h = ad::conv2d(h, conv1_w, conv1_b, 1);
  h = ad::add_channel_bias(h, time_proj(temb));
  h = ad::silu(ad::group_norm(h, gn2_g, gn2_b,
                              static_cast<int>(fit_groups(c_out, groups))));
  if (dropout_rng && dropout > 0) h = ad::dropout(h, dropout, *dropout_rng);
  h = ad::conv2d(h, conv2_w, conv2_b, 1);
  ad::Var res = skip_w ? ad::conv2d(x, skip_w, skip_b, 0) : x;
  return ad::add(h, res);
}

std::vector<ad::Var> ResBlock::params() const {
  std::vector<ad::Var> p{gn1_g, gn1_b, conv1_w, conv1_b,
                         time_proj.w, time_proj.b,
                         gn2_g, gn2_b, conv2_w, conv2_b};
  if (skip_w) {
    p.push_back(skip_w);
    p.push_back(skip_b);
  }
  return p;
}

AttentionBlock::AttentionBlock(int64_t channels, int64_t groups, Rng& rng)
    : channels(channels), groups(groups) {
  gn_g = ones_param(channels);
  gn_b = zeros_param({channels});
  double s = 1.0 / std::sqrt(static_cast<double>(channels));
  auto proj = [&](bool zero) {
    Tensor w({channels, channels});
    if (!zero)
      for (int64_t i = 0; i < w.numel(); ++i) w[i] = s * rng.normal();
    return ad::param(std::move(w));
  };
  wq = proj(false);
  wk = proj(false);
  wv = proj(false);
  wo = proj(true);  // zero-init output projection: block starts as identity
}

ad::Var AttentionBlock::operator()(const ad::Var& x) const {
  int64_t B = x->value.dim(0), C = x->value.dim(1);
  int64_t hw = x->value.dim(2) * x->value.dim(3);
  if (B != 1) throw std::invalid_argument("AttentionBlock: batch must be 1");
  ad::Var n = ad::group_norm(x, gn_g, gn_b,
                             static_cast<int>(fit_groups(C, groups)));
  ad::Var flat = ad::transpose(ad::reshape(n, {C, hw}));  // (hw, C)
  ad::Var q = ad::matmul(flat, wq);
  ad::Var k = ad::matmul(flat, wk);
  ad::Var v = ad::matmul(flat, wv);
  ad::Var attn = ad::softmax_rows(
      ad::scale(ad::matmul(q, ad::transpose(k)),
                1.0 / std::sqrt(static_cast<double>(C))));
  ad::Var out = ad::matmul(ad::matmul(attn, v), wo);
  out = ad::reshape(ad::transpose(out), x->value.shape());
  return ad::add(x, out);
}

std::vector<ad::Var> AttentionBlock::params() const {
  return {gn_g, gn_b, wq, wk, wv, wo};
}

Denoiser make_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  Denoiser d;
  d.cfg = cfg;
  const int64_t E = cfg.time_embed_dim;
  d.time_mlp = nn::Mlp({E, E, E}, nn::Act::kSilu, rng);
  d.in_w = conv_param(cfg.base_channels, cfg.data_channels, 3, rng, false);
  d.in_b = zeros_param({cfg.base_channels});

  int64_t c = cfg.base_channels;
  std::vector<int64_t> skip_chs{c};
  const int64_t levels = cfg.levels();
  d.down_blocks.resize(levels);
  for (int64_t lv = 0; lv < levels; ++lv) {
    int64_t out_c = cfg.base_channels * cfg.ch_mults[lv];
    for (int64_t b = 0; b < cfg.blocks_per_level; ++b) {
      d.down_blocks[lv].emplace_back(c, out_c, E, cfg.norm_groups, cfg.dropout,
                                     rng);
      c = out_c;
      skip_chs.push_back(c);
    }
    if (lv + 1 < levels) skip_chs.push_back(c);  // after downsample
  }
  d.mid1 = ResBlock(c, c, E, cfg.norm_groups, cfg.dropout, rng);
  d.mid_attn = AttentionBlock(c, cfg.norm_groups, rng);
  d.mid2 = ResBlock(c, c, E, cfg.norm_groups, cfg.dropout, rng);

  d.up_blocks.resize(levels);
  for (int64_t i = 0; i < levels; ++i) {
    int64_t lv = levels - 1 - i;
    int64_t out_c = cfg.base_channels * cfg.ch_mults[lv];
    for (int64_t b = 0; b < cfg.blocks_per_level + 1; ++b) {
      int64_t skip_c = skip_chs.back();
      skip_chs.pop_back();
      d.up_blocks[i].emplace_back(c + skip_c, out_c, E, cfg.norm_groups,
                                  cfg.dropout, rng);
      c = out_c;
    }
  }
  d.out_gn_g = ones_param(c);
  d.out_gn_b = zeros_param({c});
  d.out_w = conv_param(cfg.data_channels, c, 3, rng, true);
  d.out_b = zeros_param({cfg.data_channels});
  return d;
}

ad::Var Denoiser::forward(const ad::Var& x, int64_t step,
                          Rng* dropout_rng) const {
  if (x->value.rank() != 4 || x->value.dim(1) != cfg.data_channels)
    throw std::invalid_argument("Denoiser: input must be (1, C, H, W)");
  const int64_t levels = cfg.levels();
  int64_t div = int64_t{1} << (levels - 1);
  if (x->value.dim(2) % div != 0 || x->value.dim(3) % div != 0)
    throw std::invalid_argument("Denoiser: H, W must divide 2^(levels-1)");

  Tensor emb = sinusoidal_embedding(step, cfg.time_embed_dim);
  emb.reshape({1, cfg.time_embed_dim});
  ad::Var temb = time_mlp(ad::constant(std::move(emb)));

  ad::Var h = ad::conv2d(x, in_w, in_b, 1);
  std::vector<ad::Var> hs{h};
  for (int64_t lv = 0; lv < levels; ++lv) {
    for (const ResBlock& blk : down_blocks[lv]) {
      h = blk(h, temb, dropout_rng);
      hs.push_back(h);
    }
    if (lv + 1 < levels) {
      h = ad::avg_pool2(h);
      hs.push_back(h);
    }
  }
  h = mid1(h, temb, dropout_rng);
  h = mid_attn(h);
  h = mid2(h, temb, dropout_rng);
  for (int64_t i = 0; i < levels; ++i) {
    for (const ResBlock& blk : up_blocks[i]) {
      h = blk(ad::concat_channels(h, hs.back()), temb, dropout_rng);
      hs.pop_back();
    }
    if (i + 1 < levels) h = ad::upsample_nearest2(h);
  }
  h = ad::silu(ad::group_norm(
      h, out_gn_g, out_gn_b,
      static_cast<int>(fit_groups(h->value.dim(1), cfg.norm_groups))));
  return ad::conv2d(h, out_w, out_b, 1);
}

Tensor Denoiser::infer(const Tensor& x, int64_t step) const {
  Tensor in = x;
  bool squeeze = false;
  if (in.rank() == 3) {
    in.reshape({1, in.dim(0), in.dim(1), in.dim(2)});
    squeeze = true;
  }
  ad::Var out = forward(ad::constant(std::move(in)), step, nullptr);
  Tensor res = out->value;
  if (squeeze) res.reshape({res.dim(1), res.dim(2), res.dim(3)});
  return res;
}

std::vector<ad::Var> Denoiser::params() const {
  std::vector<ad::Var> p = time_mlp.params();
  p.push_back(in_w);
  p.push_back(in_b);
  for (const auto& lv : down_blocks)
    for (const ResBlock& blk : lv) append(p, blk.params());
  append(p, mid1.params());
  append(p, mid_attn.params());
  append(p, mid2.params());
  for (const auto& lv : up_blocks)
    for (const ResBlock& blk : lv) append(p, blk.params());
  p.push_back(out_gn_g);
  p.push_back(out_gn_b);
  p.push_back(out_w);
  p.push_back(out_b);
  return p;
}

int64_t Denoiser::param_count() const { return nn::param_count(params()); }

Tensor sinusoidal_embedding(int64_t step, int64_t dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: dim must be even");
  int64_t half = dim / 2;
  Tensor out({dim});
  for (int64_t i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                           static_cast<double>(std::max<int64_t>(half - 1, 1)));
    out[i] = std::sin(static_cast<double>(step) * freq);
    out[half + i] = std::cos(static_cast<double>(step) * freq);
  }
  return out;
}

}  // namespace sparsediff::diffusion
