#include "sparsediff/vq.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace sparsediff::vq {

Tensor window_to_pixels(const Tensor& window) {
  if (window.rank() != 4) throw std::invalid_argument("window must be (l,C,h,w)");
  const int64_t l = window.dim(0), C = window.dim(1), h = window.dim(2),
                w = window.dim(3);
  Tensor out({h * w, l * C});
  for (int64_t t = 0; t < l; ++t)
    for (int64_t c = 0; c < C; ++c) {
      const double* src = window.vec().data() + (t * C + c) * h * w;
      for (int64_t p = 0; p < h * w; ++p) out[p * l * C + c * l + t] = src[p];
    }
  return out;
}

Tensor encode_field(const Tensor& window, const TemporalEncoder& enc) {
  if (window.rank() != 4 || window.dim(0) != enc.lookback ||
      window.dim(1) != enc.channels)
    throw std::invalid_argument(
        "encode_field: window shape does not match configured lookback/channels");
  Tensor z = enc.net.infer(window_to_pixels(window));
  if (!z.all_finite()) throw std::runtime_error("encode_field: non-finite latents");
  return z;
}

VQAssignment quantize(const Tensor& latents, const Codebook& codebook, int64_t h,
                      int64_t w, Tensor* quantized) {
  const int64_t K = codebook.K(), d = codebook.d();
  if (K < 1) throw std::invalid_argument("quantize: empty codebook");
  if (latents.rank() != 2 || latents.dim(1) != d)
    throw std::invalid_argument("quantize: latent dim does not match codebook");
  const int64_t n = latents.dim(0);
  if (n != h * w) throw std::invalid_argument("quantize: n != h*w");

  VQAssignment a;
  a.h = h;
  a.w = w;
  a.indices.resize(static_cast<size_t>(n));
  auto Z = latents.mat(n, d);
  auto Cw = codebook.codewords->value.mat(K, d);
  if (quantized) *quantized = Tensor({n, d});
  for (int64_t p = 0; p < n; ++p) {
    int32_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int64_t k = 0; k < K; ++k) {
      double dist = (Z.row(p) - Cw.row(k)).squaredNorm();
      if (dist < best_dist) {  // strict: ties keep the lowest index
        best_dist = dist;
        best = static_cast<int32_t>(k);
      }
    }
    a.indices[static_cast<size_t>(p)] = best;
    if (quantized) quantized->mat(n, d).row(p) = Cw.row(best);
  }
  std::set<int32_t> distinct(a.indices.begin(), a.indices.end());
  a.hit_set.assign(distinct.begin(), distinct.end());
  return a;
}

std::vector<int32_t> hit_codewords(const VQAssignment& assignment) {
  return assignment.hit_set;
}

ad::Var vq_loss(const ad::Var& target_pixels, const ad::Var& reconstruction,
                const ad::Var& latents, const ad::Var& selected_codewords,
                double beta_commit) {
  const int64_t n = latents->value.dim(0);
  double inv_n = 1.0 / static_cast<double>(n);
  ad::Var recon_term = ad::mse(reconstruction, target_pixels);
  ad::Var codebook_term =
      ad::scale(ad::sum_sq(ad::sub(ad::detach(latents), selected_codewords)), inv_n);
  ad::Var commit_term =
      ad::scale(ad::sum_sq(ad::sub(latents, ad::detach(selected_codewords))), inv_n);
  return ad::add(recon_term, ad::add(codebook_term, ad::scale(commit_term, beta_commit)));
}

VqModel make_vq_model(int64_t lookback, int64_t channels,
                      const VqTrainConfig& config, Rng& rng) {
  VqModel m;
  m.encoder.lookback = lookback;
  m.encoder.channels = channels;
  m.encoder.latent_dim = config.latent_dim;
  m.encoder.net = nn::Mlp({lookback * channels, config.hidden_dim, config.latent_dim},
                          nn::Act::kSilu, rng);
  m.decoder.net = nn::Mlp({config.latent_dim, config.hidden_dim, lookback * channels},
                          nn::Act::kSilu, rng);
  Tensor cw({config.codebook_size, config.latent_dim});
  for (int64_t i = 0; i < cw.numel(); ++i) cw[i] = 0.1 * rng.normal();
  m.codebook.codewords = ad::param(std::move(cw));
  m.codebook.usage_counts.assign(static_cast<size_t>(config.codebook_size), 0);
  return m;
}

VqModel train_codebook(const std::vector<Trajectory>& dataset, int64_t lookback,
                       const VqTrainConfig& config, VqTrainLog* log) {
  if (dataset.empty()) throw std::invalid_argument("train_codebook: empty dataset");
  const int64_t C = dataset[0].channels(), h = dataset[0].height(),
                w = dataset[0].width();
  Rng rng(config.seed);
  VqModel model = make_vq_model(lookback, C, config, rng);

  std::vector<ad::Var> params = model.encoder.net.params();
  for (const auto& p : model.decoder.net.params()) params.push_back(p);
  params.push_back(model.codebook.codewords);
  nn::Adam opt(params, config.lr);
  if (log) log->param_count = nn::param_count(params);

  const int64_t K = config.codebook_size, d = config.latent_dim;
  std::vector<int64_t> epoch_usage(static_cast<size_t>(K), 0);

  for (int64_t step = 0; step < config.steps; ++step) {
    const auto& traj = dataset[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1))];
    if (traj.steps() < lookback)
      throw std::invalid_argument("train_codebook: trajectory shorter than lookback");
    int64_t t0 = rng.uniform_int(0, traj.steps() - lookback);

    // Per-pixel features for a random subset of pixels of this window.
    int64_t npix = std::min<int64_t>(config.batch_pixels, h * w);
    Tensor batch({npix, lookback * C});
    for (int64_t b = 0; b < npix; ++b) {
      int64_t p = rng.uniform_int(0, h * w - 1);
      for (int64_t c = 0; c < C; ++c)
        for (int64_t t = 0; t < lookback; ++t)
          batch[b * lookback * C + c * lookback + t] =
              traj.data[((t0 + t) * C + c) * h * w + p];
    }

    ad::Var x = ad::constant(batch);
    ad::Var z = model.encoder.net(x);
    VQAssignment assign;
    {
      // Nearest-codeword lookup happens off-tape.
      Tensor zt = z->value;
      assign = quantize(Tensor({npix, d}, zt.vec()), model.codebook, npix, 1);
    }
    for (int32_t id : assign.indices) {
      ++model.codebook.usage_counts[static_cast<size_t>(id)];
      ++epoch_usage[static_cast<size_t>(id)];
    }
    ad::Var c_sel = ad::gather_rows(model.codebook.codewords, assign.indices);
    // Straight-through: decoder sees z + sg[c - z].
    ad::Var z_q = ad::add(z, ad::constant(Tensor(
                                 z->value.shape(),
                                 Eigen::VectorXd(c_sel->value.vec() - z->value.vec()))));
    ad::Var recon = model.decoder.net(z_q);
    ad::Var loss = vq_loss(x, recon, z, c_sel, config.beta_commit);

    double lv = loss->value[0];
    if (!std::isfinite(lv))
      throw std::runtime_error("train_codebook: loss diverged (NaN/Inf) at step " +
                               std::to_string(step));
    if (log) log->loss_per_step.push_back(lv);

    opt.zero_grad();
    ad::backward(loss);
    opt.step();

    // Re-seed codewords unused for a full epoch to a random encoder output.
    if ((step + 1) % config.reseed_every == 0) {
      auto Cw = model.codebook.codewords->value.mat(K, d);
      auto Z = z->value.mat(npix, d);
      for (int64_t k = 0; k < K; ++k) {
        if (epoch_usage[static_cast<size_t>(k)] == 0) {
          Cw.row(k) = Z.row(rng.uniform_int(0, npix - 1));
          if (log) ++log->reseeded_codewords;
        }
        epoch_usage[static_cast<size_t>(k)] = 0;
      }
    }
  }
  return model;
}

}  // namespace sparsediff::vq
