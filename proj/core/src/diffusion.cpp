#include "sparsediff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsediff::diffusion {

namespace {

Tensor normal_like(const std::vector<int64_t>& shape, Rng& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

void check_step(const NoiseSchedule& s, int64_t n, int64_t lo) {
  if (n < lo || n >= s.n_steps)
    throw std::invalid_argument("diffusion: step index out of range");
}

/// Saturating guidance weight in [0, 1): zeta_n / (1 + zeta_n) with the
/// per-step precision annealed as zeta / (1 - alpha_bar_n).
double guidance_weight(double zeta, double one_minus_abar) {
  if (zeta <= 0) return 0.0;
  double zn = zeta / std::max(one_minus_abar, 1e-12);
  return zn / (1.0 + zn);
}

void range_check(const Tensor& field) {
  double lo = field.vec().minCoeff(), hi = field.vec().maxCoeff();
  if (!field.all_finite() || lo < -2.0 || hi > 3.0)
    throw NumericalError(
        "guided reconstruction left the expected normalized range "
        "[coarse bounds -2, 3]; the denoiser looks untrained or diverged");
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int64_t n_steps, double beta_start,
                                    double beta_end) {
  if (n_steps < 2) throw std::invalid_argument("NoiseSchedule: n_steps < 2");
  if (!(beta_start > 0 && beta_end < 1 && beta_start <= beta_end))
    throw std::invalid_argument("NoiseSchedule: bad beta range");
  NoiseSchedule s;
  s.n_steps = n_steps;
  s.beta.assign(n_steps, 0.0);
  s.alpha.assign(n_steps, 1.0);
  s.alpha_bar.assign(n_steps, 1.0);
  s.sigma.assign(n_steps, 0.0);
  for (int64_t n = 1; n < n_steps; ++n) {
    double t = n_steps > 2 ? static_cast<double>(n - 1) /
                                 static_cast<double>(n_steps - 2)
                           : 0.0;
    s.beta[n] = beta_start + (beta_end - beta_start) * t;
    s.alpha[n] = 1.0 - s.beta[n];
    s.alpha_bar[n] = s.alpha_bar[n - 1] * s.alpha[n];
    s.sigma[n] = std::sqrt(s.beta[n] * (1.0 - s.alpha_bar[n - 1]) /
                           (1.0 - s.alpha_bar[n]));
  }
  return s;
}

void GuidanceConfig::validate() const {
  if (zeta < 0) throw std::invalid_argument("GuidanceConfig: zeta < 0");
  if (n_start_frac < 0 || n_start_frac > 1)
    throw std::invalid_argument("GuidanceConfig: n_start_frac out of [0, 1]");
}

Tensor forward_noising(const Tensor& x0, int64_t n, const Tensor& eps,
                       const NoiseSchedule& schedule) {
  check_step(schedule, n, 0);
  if (!x0.same_shape(eps))
    throw std::invalid_argument("forward_noising: shape mismatch");
  double ab = schedule.alpha_bar[n];
  Tensor out(x0.shape());
  out.vec() = std::sqrt(ab) * x0.vec() + std::sqrt(1.0 - ab) * eps.vec();
  return out;
}

ad::Var ddpm_loss(const Tensor& batch, const Denoiser& denoiser,
                  const NoiseSchedule& schedule, Rng& rng, Rng* dropout_rng) {
  if (batch.rank() != 4)
    throw std::invalid_argument("ddpm_loss: batch must be (B, C, H, W)");
  int64_t B = batch.dim(0), C = batch.dim(1), H = batch.dim(2),
          W = batch.dim(3);
  ad::Var total;
  for (int64_t b = 0; b < B; ++b) {
    Tensor x0({1, C, H, W});
    x0.vec() = batch.vec().segment(b * C * H * W, C * H * W);
    int64_t n = rng.uniform_int(1, schedule.n_steps - 1);
    Tensor eps = normal_like({1, C, H, W}, rng);
    Tensor xn = forward_noising(x0, n, eps, schedule);
    ad::Var pred =
        denoiser.forward(ad::constant(std::move(xn)), n, dropout_rng);
    ad::Var li = ad::mse(pred, ad::constant(std::move(eps)));
    total = total ? ad::add(total, li) : li;
  }
  return ad::scale(total, 1.0 / static_cast<double>(B));
}

Tensor reverse_step(const Tensor& x_n, int64_t n, const Denoiser& denoiser,
                    const NoiseSchedule& schedule, Rng& rng) {
  check_step(schedule, n, 1);
  Tensor eps = denoiser.infer(x_n, n);
  double a = schedule.alpha[n], ab = schedule.alpha_bar[n];
  Tensor out(x_n.shape());
  out.vec() = (x_n.vec() - (schedule.beta[n] / std::sqrt(1.0 - ab)) * eps.vec()) /
              std::sqrt(a);
  if (n > 1) {
    Tensor z = normal_like(x_n.shape(), rng);
    out.vec() += schedule.sigma[n] * z.vec();
  }
  if (!out.all_finite())
    throw NumericalError("reverse_step: non-finite sample");
  return out;
}

Tensor sample_unconditional(const std::vector<int64_t>& shape,
                            const Denoiser& denoiser,
                            const NoiseSchedule& schedule, Rng& rng) {
  Tensor x = normal_like(shape, rng);
  for (int64_t n = schedule.n_steps - 1; n >= 1; --n)
    x = reverse_step(x, n, denoiser, schedule, rng);
  return x;
}

FilledField fill_regions(const topology::ProbeGraph& graph,
                         int64_t frame_index) {
  const auto& rm = graph.region_map;
  int64_t k = graph.k(), l = graph.lookback(), C = graph.channels();
  if (frame_index < 0 || frame_index >= l)
    throw std::invalid_argument("fill_regions: frame index out of range");
  FilledField f;
  f.field = Tensor({C, rm.h, rm.w});
  f.mask = Tensor({rm.h, rm.w}, 1.0);
  for (int64_t cell = 0; cell < rm.h * rm.w; ++cell) {
    int64_t r = rm.cell_region[cell];
    if (r < 0 || r >= k)
      throw std::invalid_argument("fill_regions: region map does not cover grid");
    for (int64_t c = 0; c < C; ++c)
      f.field[c * rm.h * rm.w + cell] =
          graph.probe_states[(r * l + frame_index) * C + c];
  }
  return f;
}

Tensor guided_reconstruct_field(const FilledField& filled,
                                const Denoiser& denoiser,
                                const NoiseSchedule& schedule,
                                const GuidanceConfig& guidance, Rng& rng) {
  guidance.validate();
  const Tensor& y = filled.field;  // (C, h, w)
  if (y.rank() != 3 || filled.mask.numel() != y.dim(1) * y.dim(2))
    throw std::invalid_argument("guided_reconstruct: bad filled field");
  int64_t C = y.dim(0), hw = y.dim(1) * y.dim(2);

  int64_t n_start = static_cast<int64_t>(
      std::ceil(guidance.n_start_frac * static_cast<double>(schedule.n_steps)));
  n_start = std::min(n_start, schedule.n_steps - 1);
  if (n_start <= 0) return y;

  Tensor x = forward_noising(y, n_start, normal_like(y.shape(), rng), schedule);
  for (int64_t n = n_start; n >= 1; --n) {
    double a = schedule.alpha[n], ab = schedule.alpha_bar[n];
    double ab_prev = schedule.alpha_bar[n - 1];
    double w = guidance_weight(guidance.zeta, 1.0 - ab);

    if (guidance.mode == GuidanceMode::kNoisedTarget && w > 0) {
      // Pull x_n toward the forward-noised target mean before denoising.
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < hw; ++i) {
          double m = filled.mask[i];
          double& xi = x[c * hw + i];
          xi += w * m * (std::sqrt(ab) * y[c * hw + i] - xi);
        }
    }

    Tensor eps = denoiser.infer(x, n);
    // Tweedie estimate of the clean field, nudged toward the observations.
    Tensor x0(y.shape());
    x0.vec() = (x.vec() - std::sqrt(1.0 - ab) * eps.vec()) / std::sqrt(ab);
    if (guidance.mode == GuidanceMode::kX0Estimate && w > 0) {
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < hw; ++i) {
          double m = filled.mask[i];
          double& x0i = x0[c * hw + i];
          x0i += w * m * (y[c * hw + i] - x0i);
        }
    }
    // Posterior mean in x0 parameterization, plus the ancestral noise term.
    Tensor next(y.shape());
    next.vec() = (std::sqrt(ab_prev) * schedule.beta[n] * x0.vec() +
                  std::sqrt(a) * (1.0 - ab_prev) * x.vec()) /
                 (1.0 - ab);
    if (n > 1) {
      Tensor z = normal_like(y.shape(), rng);
      next.vec() += schedule.sigma[n] * z.vec();
    }
    x = std::move(next);
    if (!x.all_finite())
      throw NumericalError("guided_reconstruct: non-finite sample");
  }
  range_check(x);
  return x;
}

Tensor guided_reconstruct(const topology::ProbeGraph& graph,
                          int64_t frame_index, const Denoiser& denoiser,
                          const NoiseSchedule& schedule,
                          const GuidanceConfig& guidance, Rng& rng) {
  FilledField filled = fill_regions(graph, frame_index);
  // Only the probe cells are true observations; the region fill just seeds
  // the warm start, so the reverse chain is free to smooth between probes.
  filled.mask.vec().setZero();
  const int64_t w = graph.region_map.w;
  for (auto [r, c] : graph.probe_coords) filled.mask[r * w + c] = 1.0;
  return guided_reconstruct_field(filled, denoiser, schedule, guidance, rng);
}

}  // namespace sparsediff::diffusion
