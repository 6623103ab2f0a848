#include "sparsediff/systems.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numbers>

namespace sparsediff::systems {

namespace {

using Cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

constexpr double kBlowupThreshold = 1e3;

/// Full-spectrum c2c FFT pair on an h x w periodic grid, plus wavenumbers.
/// Plans use FFTW_ESTIMATE so repeated runs are bit-identical.
class Spectral {
 public:
  Spectral(int64_t h, int64_t w, double ly, double lx) : h_(h), w_(w) {
    buf_ = fftw_alloc_complex(static_cast<size_t>(h * w));
    fwd_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_, buf_,
                            FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_, buf_,
                            FFTW_BACKWARD, FFTW_ESTIMATE);
    kx_.resize(h * w);
    ky_.resize(h * w);
    k2_.resize(h * w);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int64_t i = 0; i < h; ++i) {
      double ky = two_pi / ly * static_cast<double>(i <= h / 2 ? i : i - h);
      for (int64_t j = 0; j < w; ++j) {
        double kx = two_pi / lx * static_cast<double>(j <= w / 2 ? j : j - w);
        kx_[i * w + j] = kx;
        ky_[i * w + j] = ky;
        k2_[i * w + j] = kx * kx + ky * ky;
      }
    }
  }
  ~Spectral() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  CVec forward(const RVec& real) const {
    for (int64_t i = 0; i < h_ * w_; ++i) {
      buf_[i][0] = real[i];
      buf_[i][1] = 0.0;
    }
    fftw_execute(fwd_);
    CVec out(h_ * w_);
    for (int64_t i = 0; i < h_ * w_; ++i) out[i] = Cplx(buf_[i][0], buf_[i][1]);
    return out;
  }

  RVec inverse(const CVec& spec) const {
    for (int64_t i = 0; i < h_ * w_; ++i) {
      buf_[i][0] = spec[i].real();
      buf_[i][1] = spec[i].imag();
    }
    fftw_execute(bwd_);
    RVec out(h_ * w_);
    double norm = 1.0 / static_cast<double>(h_ * w_);
    for (int64_t i = 0; i < h_ * w_; ++i) out[i] = buf_[i][0] * norm;
    return out;
  }

  const RVec& kx() const { return kx_; }
  const RVec& ky() const { return ky_; }
  const RVec& k2() const { return k2_; }
  int64_t n() const { return h_ * w_; }

  /// 2/3-rule dealiasing mask (1 inside, 0 outside).
  RVec dealias_mask() const {
    RVec mask(h_ * w_);
    for (int64_t i = 0; i < h_; ++i) {
      int64_t fi = i <= h_ / 2 ? i : i - h_;
      for (int64_t j = 0; j < w_; ++j) {
        int64_t fj = j <= w_ / 2 ? j : j - w_;
        bool keep = std::abs(fi) <= h_ / 3 && std::abs(fj) <= w_ / 3;
        mask[i * w_ + j] = keep ? 1.0 : 0.0;
      }
    }
    return mask;
  }

 private:
  int64_t h_, w_;
  fftw_complex* buf_;
  fftw_plan fwd_, bwd_;
  mutable RVec kx_, ky_, k2_;
};

void check_blowup(const Tensor& frame, const char* system) {
  double mx = frame.vec().cwiseAbs().maxCoeff();
  if (!std::isfinite(mx) || mx > kBlowupThreshold)
    throw BlowupError(std::string(system) +
                      ": field magnitude exceeded blow-up threshold 1e3 "
                      "(unstable solver_dt?)");
}

/// Integrating-factor RK4 on du/dt = L u + N(u), linear part exact per mode.
/// State is per-channel spectral; nonlin maps real fields to real tendencies.
struct IfRk4 {
  const Spectral& sp;
  std::vector<RVec> lin;  // L per channel
  std::function<void(const std::vector<RVec>&, std::vector<RVec>&)> nonlin;

  void step(std::vector<CVec>& u_hat, double dt) const {
    const int64_t nc = static_cast<int64_t>(u_hat.size());
    std::vector<RVec> e_half(nc), e_full(nc);
    for (int64_t c = 0; c < nc; ++c) {
      e_half[c] = (lin[c].array() * (dt / 2.0)).exp();
      e_full[c] = (lin[c].array() * dt).exp();
    }
    auto eval_n = [&](const std::vector<CVec>& state) {
      std::vector<RVec> real(nc), tend(nc);
      for (int64_t c = 0; c < nc; ++c) real[c] = sp.inverse(state[c]);
      tend.assign(nc, RVec());
      nonlin(real, tend);
      std::vector<CVec> out(nc);
      for (int64_t c = 0; c < nc; ++c) out[c] = sp.forward(tend[c]);
      return out;
    };

    auto k1 = eval_n(u_hat);
    std::vector<CVec> stage(nc);
    for (int64_t c = 0; c < nc; ++c)
      stage[c] = e_half[c].array() * (u_hat[c] + (dt / 2.0) * k1[c]).array();
    auto k2 = eval_n(stage);  // = E * classic k2
    for (int64_t c = 0; c < nc; ++c)
      stage[c] = e_half[c].array() * u_hat[c].array() + (dt / 2.0) * k2[c].array();
    auto k3 = eval_n(stage);  // = E * classic k3
    for (int64_t c = 0; c < nc; ++c)
      stage[c] = e_full[c].array() * u_hat[c].array() +
                 dt * (e_half[c].array() * k3[c].array());
    auto k4 = eval_n(stage);  // = E^2 * classic k4
    for (int64_t c = 0; c < nc; ++c)
      u_hat[c] = e_full[c].array() * u_hat[c].array() +
                 (dt / 6.0) * (e_full[c].array() * k1[c].array() +
                               2.0 * e_half[c].array() *
                                   (k2[c].array() + k3[c].array()) +
                               k4[c].array());
  }
};

Trajectory run_spectral(const GridSpec& grid, const Tensor& ic,
                        const std::vector<RVec>& lin,
                        const std::function<void(const std::vector<RVec>&,
                                                 std::vector<RVec>&)>& nonlin,
                        int64_t n_frames, double dt, int64_t store_every,
                        const std::vector<std::string>& channels,
                        const Spectral& sp, const char* name) {
  grid.validate();
  if (!ic.all_finite()) throw std::invalid_argument("ic must be finite");
  if (n_frames < 1 || store_every < 1 || dt <= 0)
    throw std::invalid_argument("bad stepping parameters");
  const int64_t nc = static_cast<int64_t>(channels.size());
  const int64_t h = grid.height, w = grid.width, n = h * w;
  if (ic.numel() != nc * n)
    throw std::invalid_argument(std::string(name) + ": ic shape mismatch");

  IfRk4 stepper{sp, lin, nonlin};
  std::vector<CVec> u_hat(nc);
  for (int64_t c = 0; c < nc; ++c)
    u_hat[c] = sp.forward(ic.vec().segment(c * n, n));

  Trajectory traj;
  traj.data = Tensor({n_frames, nc, h, w});
  traj.dt = dt * static_cast<double>(store_every);
  traj.channel_names = channels;
  for (int64_t c = 0; c < nc; ++c)
    traj.data.vec().segment(c * n, n) = ic.vec().segment(c * n, n);

  for (int64_t f = 1; f < n_frames; ++f) {
    for (int64_t s = 0; s < store_every; ++s) stepper.step(u_hat, dt);
    Tensor frame({nc, h, w});
    for (int64_t c = 0; c < nc; ++c)
      frame.vec().segment(c * n, n) = sp.inverse(u_hat[c]);
    check_blowup(frame, name);
    traj.data.vec().segment(f * nc * n, nc * n) = frame.vec();
  }
  return traj;
}

double bilinear_at(const double* src, int64_t h, int64_t w, double y, double x) {
  // Clamped cell-center sampling.
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  int64_t i0 = static_cast<int64_t>(std::floor(y)), j0 = static_cast<int64_t>(std::floor(x));
  int64_t i1 = std::min(i0 + 1, h - 1), j1 = std::min(j0 + 1, w - 1);
  double fy = y - static_cast<double>(i0), fx = x - static_cast<double>(j0);
  return (1 - fy) * ((1 - fx) * src[i0 * w + j0] + fx * src[i0 * w + j1]) +
         fy * ((1 - fx) * src[i1 * w + j0] + fx * src[i1 * w + j1]);
}

}  // namespace

Tensor random_field(const GridSpec& grid, int64_t channels, int64_t max_mode,
                    Rng& rng) {
  grid.validate();
  const int64_t h = grid.height, w = grid.width, n = h * w;
  Spectral sp(h, w, grid.domain_length_y, grid.domain_length_x);
  Tensor out({channels, h, w});
  for (int64_t c = 0; c < channels; ++c) {
    CVec spec = CVec::Zero(n);
    for (int64_t i = 0; i < h; ++i) {
      int64_t fi = i <= h / 2 ? i : i - h;
      for (int64_t j = 0; j < w; ++j) {
        int64_t fj = j <= w / 2 ? j : j - w;
        if (fi == 0 && fj == 0) continue;  // keep zero mean
        if (fi * fi + fj * fj > max_mode * max_mode) continue;
        spec[i * w + j] = Cplx(rng.normal(), rng.normal());
      }
    }
    RVec field = sp.inverse(spec);
    double mean = field.mean();
    double sd = std::sqrt((field.array() - mean).square().mean());
    if (sd > 0) field = (field.array() - mean) / sd;
    out.vec().segment(c * n, n) = field;
  }
  return out;
}

Trajectory simulate_lambda_omega(const LambdaOmegaParams& params,
                                 const GridSpec& grid, const Tensor& ic,
                                 int64_t n_frames, double solver_dt,
                                 int64_t store_every) {
  if (params.mu_u <= 0 || params.mu_v <= 0)
    throw std::invalid_argument("lambda_omega: diffusivities must be positive");
  Spectral sp(grid.height, grid.width, grid.domain_length_y, grid.domain_length_x);
  std::vector<RVec> lin = {RVec(-params.mu_u * sp.k2()),
                           RVec(-params.mu_v * sp.k2())};
  double beta = params.beta_lo;
  auto nonlin = [beta](const std::vector<RVec>& f, std::vector<RVec>& out) {
    const auto& u = f[0].array();
    const auto& v = f[1].array();
    auto r2 = u.square() + v.square();
    out[0] = ((1.0 - r2) * u + beta * r2 * v).matrix();
    out[1] = ((1.0 - r2) * v - beta * r2 * u).matrix();
  };
  return run_spectral(grid, ic, lin, nonlin, n_frames, solver_dt, store_every,
                      {"u", "v"}, sp, "lambda_omega");
}

Trajectory simulate_navier_stokes(const NavierStokesParams& params,
                                  const GridSpec& grid, const Tensor& ic,
                                  int64_t n_frames, double solver_dt,
                                  int64_t store_every) {
  if (params.nu <= 0) throw std::invalid_argument("navier_stokes: nu must be positive");
  Spectral sp(grid.height, grid.width, grid.domain_length_y, grid.domain_length_x);
  const int64_t h = grid.height, w = grid.width, n = h * w;
  std::vector<RVec> lin = {RVec(-params.nu * sp.k2())};

  // Stationary forcing f = A (sin(2*pi*(x+y+s)) + cos(2*pi*(x+y+s))).
  RVec forcing(n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      double x = grid.domain_length_x * static_cast<double>(j) / static_cast<double>(w);
      double y = grid.domain_length_y * static_cast<double>(i) / static_cast<double>(h);
      double phase = two_pi * (x + y + params.phase_shift);
      forcing[i * w + j] =
          params.forcing_amplitude * (std::sin(phase) + std::cos(phase));
    }

  RVec mask = sp.dealias_mask();
  auto nonlin = [&sp, &forcing, mask, n](const std::vector<RVec>& f,
                                         std::vector<RVec>& out) {
    CVec w_hat = sp.forward(f[0]);
    // psi from -Laplace(psi) = omega, mean mode projected out.
    CVec psi_hat(n);
    for (int64_t i = 0; i < n; ++i)
      psi_hat[i] = sp.k2()[i] > 0 ? w_hat[i] / sp.k2()[i] : Cplx(0, 0);
    const Cplx im(0, 1);
    CVec u_hat = (im * sp.ky().array()).matrix().cwiseProduct(psi_hat);
    CVec v_hat = (-im * sp.kx().array()).matrix().cwiseProduct(psi_hat);
    RVec u = sp.inverse(u_hat), v = sp.inverse(v_hat);
    // Conservative advection: -d/dx(u*omega) - d/dy(v*omega); its spatial mean
    // vanishes exactly, so mean vorticity is conserved.
    CVec fx = sp.forward(u.cwiseProduct(f[0]));
    CVec fy = sp.forward(v.cwiseProduct(f[0]));
    CVec adv(n);
    for (int64_t i = 0; i < n; ++i)
      adv[i] = -mask[i] * im * (sp.kx()[i] * fx[i] + sp.ky()[i] * fy[i]);
    out[0] = sp.inverse(adv) + forcing;
  };
  return run_spectral(grid, ic, lin, nonlin, n_frames, solver_dt, store_every,
                      {"omega"}, sp, "navier_stokes");
}

Trajectory simulate_swift_hohenberg(const SwiftHohenbergParams& params,
                                    const GridSpec& grid, const Tensor& ic,
                                    int64_t n_frames, double solver_dt,
                                    int64_t store_every) {
  Spectral sp(grid.height, grid.width, grid.domain_length_y, grid.domain_length_x);
  // r u - 2 Lap u - Lap^2 u  ->  sigma(k) = r + 2 k^2 - k^4.
  RVec lin0 = (params.r + 2.0 * sp.k2().array() - sp.k2().array().square()).matrix();
  double g = params.g;
  auto nonlin = [g](const std::vector<RVec>& f, std::vector<RVec>& out) {
    const auto& u = f[0].array();
    out[0] = (g * u.square() - u.cube()).matrix();
  };
  return run_spectral(grid, ic, {lin0}, nonlin, n_frames, solver_dt, store_every,
                      {"u"}, sp, "swift_hohenberg");
}

Trajectory normalize_minmax(const Trajectory& traj) {
  if (!traj.data.all_finite())
    throw std::invalid_argument("normalize_minmax: non-finite input");
  const int64_t T = traj.steps(), C = traj.channels(), n = traj.height() * traj.width();
  Trajectory out = traj;
  NormStats stats;
  stats.min_max.resize(static_cast<size_t>(C));
  stats.constant_channel.resize(static_cast<size_t>(C), false);
  for (int64_t c = 0; c < C; ++c) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int64_t t = 0; t < T; ++t) {
      auto seg = traj.data.vec().segment((t * C + c) * n, n);
      mn = std::min(mn, seg.minCoeff());
      mx = std::max(mx, seg.maxCoeff());
    }
    stats.min_max[static_cast<size_t>(c)] = {mn, mx};
    for (int64_t t = 0; t < T; ++t) {
      auto seg = out.data.vec().segment((t * C + c) * n, n);
      if (mx > mn) {
        seg = (seg.array() - mn) / (mx - mn);
      } else {
        seg.setConstant(0.5);  // constant channel, flagged
        stats.constant_channel[static_cast<size_t>(c)] = true;
      }
    }
  }
  out.norm_stats = stats;
  return out;
}

NormStats minmax_stats(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("minmax_stats: no trajectories");
  const int64_t C = trajs.front().channels();
  NormStats stats;
  stats.min_max.assign(static_cast<size_t>(C),
                       {std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity()});
  stats.constant_channel.assign(static_cast<size_t>(C), false);
  for (const auto& traj : trajs) {
    if (!traj.data.all_finite())
      throw std::invalid_argument("minmax_stats: non-finite input");
    const int64_t T = traj.steps(), n = traj.height() * traj.width();
    for (int64_t c = 0; c < C; ++c) {
      auto& [mn, mx] = stats.min_max[static_cast<size_t>(c)];
      for (int64_t t = 0; t < T; ++t) {
        auto seg = traj.data.vec().segment((t * C + c) * n, n);
        mn = std::min(mn, seg.minCoeff());
        mx = std::max(mx, seg.maxCoeff());
      }
    }
  }
  for (int64_t c = 0; c < C; ++c) {
    auto [mn, mx] = stats.min_max[static_cast<size_t>(c)];
    if (!(mx > mn)) stats.constant_channel[static_cast<size_t>(c)] = true;
  }
  return stats;
}

Trajectory normalize_with_stats(const Trajectory& traj, const NormStats& stats) {
  const int64_t T = traj.steps(), C = traj.channels(),
                n = traj.height() * traj.width();
  if (stats.min_max.size() != static_cast<size_t>(C))
    throw std::invalid_argument("normalize_with_stats: channel count mismatch");
  Trajectory out = traj;
  for (int64_t c = 0; c < C; ++c) {
    auto [mn, mx] = stats.min_max[static_cast<size_t>(c)];
    for (int64_t t = 0; t < T; ++t) {
      auto seg = out.data.vec().segment((t * C + c) * n, n);
      if (mx > mn) seg = (seg.array() - mn) / (mx - mn);
      else seg.setConstant(0.5);
    }
  }
  out.norm_stats = stats;
  return out;
}

Trajectory denormalize(const Trajectory& traj) {
  if (!traj.norm_stats)
    throw std::invalid_argument("denormalize: trajectory has no norm stats");
  const int64_t T = traj.steps(), C = traj.channels(), n = traj.height() * traj.width();
  Trajectory out = traj;
  for (int64_t c = 0; c < C; ++c) {
    auto [mn, mx] = traj.norm_stats->min_max[static_cast<size_t>(c)];
    for (int64_t t = 0; t < T; ++t) {
      auto seg = out.data.vec().segment((t * C + c) * n, n);
      if (mx > mn) seg = seg.array() * (mx - mn) + mn;
      else seg.setConstant(mn);
    }
  }
  out.norm_stats.reset();
  return out;
}

Trajectory downsample(const Trajectory& traj, int64_t t_factor, int64_t target_h,
                      int64_t target_w) {
  if (t_factor < 1) throw std::invalid_argument("downsample: t_factor must be >= 1");
  if (target_h > traj.height() || target_w > traj.width())
    throw std::invalid_argument("downsample: spatial target exceeds source grid");
  const int64_t T = traj.steps(), C = traj.channels(), h = traj.height(),
                w = traj.width();
  const int64_t Tn = (T + t_factor - 1) / t_factor;  // stride, tail truncated
  Trajectory out;
  out.data = Tensor({Tn, C, target_h, target_w});
  out.dt = traj.dt * static_cast<double>(t_factor);
  out.channel_names = traj.channel_names;
  out.norm_stats = traj.norm_stats;
  double sy = static_cast<double>(h) / static_cast<double>(target_h);
  double sx = static_cast<double>(w) / static_cast<double>(target_w);
  for (int64_t tn = 0; tn < Tn; ++tn) {
    int64_t t = tn * t_factor;
    for (int64_t c = 0; c < C; ++c) {
      const double* src = traj.data.vec().data() + (t * C + c) * h * w;
      double* dst = out.data.vec().data() + (tn * C + c) * target_h * target_w;
      for (int64_t i = 0; i < target_h; ++i)
        for (int64_t j = 0; j < target_w; ++j)
          dst[i * target_w + j] =
              bilinear_at(src, h, w, (static_cast<double>(i) + 0.5) * sy - 0.5,
                          (static_cast<double>(j) + 0.5) * sx - 0.5);
    }
  }
  return out;
}

}  // namespace sparsediff::systems
