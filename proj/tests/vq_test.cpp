#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sparsediff/systems.hpp"
#include "sparsediff/vq.hpp"

using namespace sparsediff;
using namespace sparsediff::vq;
namespace ad = sparsediff::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.vec()[i] = rng.normal();
  return t;
}

// Brute-force nearest-codeword assignment, lowest index on ties.
std::vector<int32_t> assign_oracle(const Tensor& latents, const Tensor& codewords) {
  const int64_t n = latents.dim(0), d = latents.dim(1), K = codewords.dim(0);
  std::vector<int32_t> out(n);
  for (int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int32_t arg = 0;
    for (int64_t k = 0; k < K; ++k) {
      double dist = 0;
      for (int64_t j = 0; j < d; ++j) {
        const double diff = latents.vec()[i * d + j] - codewords.vec()[k * d + j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        arg = static_cast<int32_t>(k);
      }
    }
    out[i] = arg;
  }
  return out;
}

std::vector<Trajectory> tiny_lo_dataset(int64_t n_traj, uint64_t seed) {
  GridSpec g;
  g.height = 16;
  g.width = 16;
  g.domain_length_x = 20.0;
  g.domain_length_y = 20.0;
  std::vector<Trajectory> out;
  Rng rng(seed);
  for (int64_t i = 0; i < n_traj; ++i) {
    Tensor ic = systems::random_field(g, 2, 4, rng);
    out.push_back(systems::normalize_minmax(
        systems::simulate_lambda_omega({}, g, ic, 24, 0.05, 5)));
  }
  return out;
}

}  // namespace

TEST_CASE("window_to_pixels uses channel-major per-pixel layout") {
  // (l=2, C=2, h=1, w=2); pixel feature index is c*l + t
  Tensor window({2, 2, 1, 2});
  for (int64_t i = 0; i < 8; ++i) window.vec()[i] = i;  // t*4 + c*2 + x
  Tensor pixels = window_to_pixels(window);
  REQUIRE(pixels.dim(0) == 2);
  REQUIRE(pixels.dim(1) == 4);
  // pixel 0: [u(t0), u(t1), v(t0), v(t1)] = [0, 4, 2, 6]
  CHECK(pixels.vec()[0] == 0);
  CHECK(pixels.vec()[1] == 4);
  CHECK(pixels.vec()[2] == 2);
  CHECK(pixels.vec()[3] == 6);
  // pixel 1 shifts by the x offset
  CHECK(pixels.vec()[4] == 1);
  CHECK(pixels.vec()[5] == 5);
}

TEST_CASE("encode_field rejects a wrong window length") {
  Rng rng(1);
  VqTrainConfig cfg;
  cfg.codebook_size = 4;
  cfg.latent_dim = 3;
  cfg.hidden_dim = 8;
  VqModel model = make_vq_model(/*lookback=*/5, /*channels=*/2, cfg, rng);
  Tensor bad({4, 2, 4, 4});
  CHECK_THROWS(encode_field(bad, model.encoder));
  Tensor good({5, 2, 4, 4});
  good.vec().setZero();
  Tensor latents = encode_field(good, model.encoder);
  CHECK(latents.dim(0) == 16);
  CHECK(latents.dim(1) == 3);
}

TEST_CASE("quantize matches the brute-force oracle") {
  Rng rng(17);
  for (int round = 0; round < 5; ++round) {
    Tensor latents = random_tensor({48, 6}, rng);
    Codebook book;
    book.codewords = ad::param(random_tensor({9, 6}, rng));
    book.usage_counts.assign(9, 0);
    Tensor quantized;
    VQAssignment a = quantize(latents, book, 6, 8, &quantized);
    std::vector<int32_t> expect = assign_oracle(latents, book.codewords->value);
    REQUIRE(a.indices.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) CHECK(a.indices[i] == expect[i]);
    // quantized rows are the selected codewords verbatim
    for (size_t i = 0; i < expect.size(); ++i)
      for (int64_t j = 0; j < 6; ++j)
        CHECK(quantized.vec()[i * 6 + j] ==
              book.codewords->value.vec()[expect[i] * 6 + j]);
    // hit set is sorted and distinct
    for (size_t i = 1; i < a.hit_set.size(); ++i)
      CHECK(a.hit_set[i] > a.hit_set[i - 1]);
  }
}

TEST_CASE("quantize breaks ties by lowest index") {
  Tensor latents({2, 2});
  latents.vec() << 1.0, 0.0, -1.0, 0.0;
  Codebook book;
  Tensor words({3, 2});
  words.vec() << 1.0, 0.0, 1.0, 0.0, -1.0, 0.0;  // rows 0 and 1 identical
  book.codewords = ad::param(words);
  book.usage_counts.assign(3, 0);
  VQAssignment a = quantize(latents, book, 1, 2);
  CHECK(a.indices[0] == 0);  // not 1
  CHECK(a.indices[1] == 2);
}

TEST_CASE("vq_loss vanishes at a perfect fit and splits into its terms") {
  Rng rng(3);
  Tensor x = random_tensor({7, 4}, rng);
  auto target = ad::constant(x);
  auto same = ad::param(x);
  auto zero_loss = vq_loss(target, same, same, same, 0.25);
  CHECK(zero_loss->value.vec()[0] == doctest::Approx(0.0).epsilon(1e-12));

  // recon == target, codewords differ from latents: loss = (1 + beta) * mse
  Tensor z = random_tensor({7, 4}, rng);
  Tensor q = random_tensor({7, 4}, rng);
  const double mse_zq = (z.vec() - q.vec()).squaredNorm() / 7.0;
  auto loss = vq_loss(target, ad::constant(x), ad::param(z), ad::param(q), 0.25);
  CHECK(loss->value.vec()[0] == doctest::Approx(1.25 * mse_zq).epsilon(1e-9));
}

TEST_CASE("straight-through gradients match finite differences") {
  // The training objective uses stop-gradients, so its raw value is not the
  // antiderivative of its gradient. Build a smooth surrogate that freezes
  // every stop-gradient quantity at the baseline: its exact gradient equals
  // the straight-through gradient, so (a) surrogate FD must match surrogate
  // backprop and (b) the production objective's backprop must match too.
  Rng rng(5);
  VqTrainConfig cfg;
  cfg.codebook_size = 6;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  VqModel model = make_vq_model(3, 1, cfg, rng);
  Tensor window = random_tensor({3, 1, 4, 4}, rng);
  Tensor pixels = window_to_pixels(window);

  Tensor z0 = encode_field(window, model.encoder);
  Tensor q0;
  VQAssignment assign = quantize(z0, model.codebook, 4, 4, &q0);
  Tensor offset = q0;
  offset.vec() -= z0.vec();

  const double beta = 0.25;
  auto surrogate = [&]() {
    auto target = ad::constant(pixels);
    auto latents = model.encoder.net(ad::constant(pixels));
    auto selected = ad::gather_rows(model.codebook.codewords, assign.indices);
    auto recon = model.decoder.net(ad::add(latents, ad::constant(offset)));
    // squared norms over the latent dimension, averaged over the batch
    const double inv_n = 1.0 / static_cast<double>(z0.dim(0));
    auto fit = ad::scale(ad::sum_sq(ad::sub(selected, ad::constant(z0))), inv_n);
    auto commit = ad::scale(ad::sum_sq(ad::sub(latents, ad::constant(q0))), inv_n);
    return ad::add(ad::mse(recon, target),
                   ad::add(fit, ad::scale(commit, beta)));
  };

  std::vector<ad::Var> params = model.encoder.net.params();
  for (auto& p : model.decoder.net.params()) params.push_back(p);
  params.push_back(model.codebook.codewords);

  ad::zero_grad(params);
  ad::backward(surrogate());
  std::vector<Eigen::VectorXd> expect;
  for (auto& p : params) expect.push_back(p->grad.vec());

  const double eps = 1e-5;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (int64_t i = 0; i < std::min<int64_t>(p->value.numel(), 16); ++i) {
      const double saved = p->value.vec()[i];
      p->value.vec()[i] = saved + eps;
      const double up = surrogate()->value.vec()[0];
      p->value.vec()[i] = saved - eps;
      const double down = surrogate()->value.vec()[0];
      p->value.vec()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = expect[pi][i];
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
      CHECK(std::abs(numeric - analytic) / denom < 1e-4);
    }
  }

  // the production objective backpropagates the same gradients
  ad::zero_grad(params);
  {
    auto target = ad::constant(pixels);
    auto latents = model.encoder.net(ad::constant(pixels));
    auto selected = ad::gather_rows(model.codebook.codewords, assign.indices);
    auto decoder_in = ad::add(ad::detach(ad::sub(selected, latents)), latents);
    auto recon = model.decoder.net(decoder_in);
    ad::backward(vq_loss(target, recon, latents, selected, beta));
  }
  for (size_t pi = 0; pi < params.size(); ++pi)
    for (int64_t i = 0; i < params[pi]->value.numel(); ++i)
      CHECK(params[pi]->grad.vec()[i] ==
            doctest::Approx(expect[pi][i]).epsilon(1e-9));
}

TEST_CASE("training reduces the objective on small reaction-diffusion data") {
  auto data = tiny_lo_dataset(2, 11);
  VqTrainConfig cfg;
  cfg.codebook_size = 8;
  cfg.latent_dim = 6;
  cfg.hidden_dim = 16;
  cfg.batch_pixels = 128;
  cfg.steps = 300;
  cfg.seed = 1;
  VqTrainLog log;
  VqModel model = train_codebook(data, /*lookback=*/4, cfg, &log);
  REQUIRE(log.loss_per_step.size() == 300);
  double early = 0, late = 0;
  for (int i = 0; i < 20; ++i) {
    early += log.loss_per_step[i];
    late += log.loss_per_step[280 + i];
  }
  CHECK(late < early);
  CHECK(model.codebook.K() == 8);

  // usage counters reflect the last assignment pass
  int64_t used = 0;
  for (int64_t k = 0; k < 8; ++k)
    if (model.codebook.usage_counts[k] > 0) ++used;
  CHECK(used >= 2);
}

TEST_CASE("codebook training is deterministic in the seed") {
  auto data = tiny_lo_dataset(1, 21);
  VqTrainConfig cfg;
  cfg.codebook_size = 4;
  cfg.latent_dim = 4;
  cfg.hidden_dim = 8;
  cfg.batch_pixels = 64;
  cfg.steps = 40;
  cfg.seed = 9;
  VqModel a = train_codebook(data, 4, cfg);
  VqModel b = train_codebook(data, 4, cfg);
  CHECK(a.codebook.codewords->value.vec() == b.codebook.codewords->value.vec());
}
