#include <doctest.h>

#include <cmath>
#include <vector>

#include "sparsediff/systems.hpp"

using namespace sparsediff;
using namespace sparsediff::systems;

namespace {

GridSpec periodic_grid(int64_t n, double length) {
  GridSpec g;
  g.height = n;
  g.width = n;
  g.domain_length_x = length;
  g.domain_length_y = length;
  return g;
}

double max_abs(const Tensor& t) { return t.vec().cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("lambda-omega: zero field is a fixed point") {
  GridSpec g = periodic_grid(16, 20.0);
  Tensor ic({2, 16, 16});
  ic.vec().setZero();
  Trajectory traj = simulate_lambda_omega({}, g, ic, 10, 0.05);
  CHECK(max_abs(traj.data) == 0.0);
}

TEST_CASE("lambda-omega: uniform state rotates on the unit circle") {
  // For spatially uniform fields diffusion vanishes and the amplitude locks
  // to 1, leaving du/dt = v, dv/dt = -u: u(t) = cos(t), v(t) = -sin(t).
  GridSpec g = periodic_grid(16, 20.0);
  Tensor ic({2, 16, 16});
  for (int64_t i = 0; i < 16 * 16; ++i) {
    ic.vec()[i] = 1.0;           // u
    ic.vec()[16 * 16 + i] = 0.0;  // v
  }
  const double dt = 0.001;
  const int64_t steps = 1000;  // t = 1
  Trajectory traj = simulate_lambda_omega({}, g, ic, 2, dt, steps);
  const double u = traj.at(1, 0, 3, 5);
  const double v = traj.at(1, 1, 3, 5);
  CHECK(std::abs(u - std::cos(1.0)) < 1e-3);
  CHECK(std::abs(v + std::sin(1.0)) < 1e-3);
}

TEST_CASE("lambda-omega: default parameters sustain spatial structure") {
  GridSpec g = periodic_grid(32, 20.0);
  Rng rng(4);
  Tensor ic = random_field(g, 2, 4, rng);
  Trajectory traj = simulate_lambda_omega({}, g, ic, 40, 0.05, 10);
  const auto frame_std = [&](int64_t t) {
    Eigen::VectorXd f = traj.data.vec().segment(t * 2 * 32 * 32, 2 * 32 * 32);
    return std::sqrt((f.array() - f.mean()).square().mean());
  };
  CHECK(frame_std(39) > 0.25 * frame_std(0));
  // still moving at the end of the window
  Eigen::VectorXd last = traj.data.vec().tail(2 * 32 * 32);
  Eigen::VectorXd prev = traj.data.vec().segment(38 * 2 * 32 * 32, 2 * 32 * 32);
  CHECK((last - prev).cwiseAbs().mean() > 1e-3);
}

TEST_CASE("navier-stokes: Taylor-Green vortex decays analytically") {
  const int64_t n = 64;
  GridSpec g = periodic_grid(n, 2.0 * M_PI);
  NavierStokesParams p;
  p.nu = 1.0;
  p.forcing_amplitude = 0.0;
  Tensor ic({1, n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      const double x = 2.0 * M_PI * static_cast<double>(j) / n;
      const double y = 2.0 * M_PI * static_cast<double>(i) / n;
      ic.vec()[i * n + j] = 2.0 * std::cos(x) * std::cos(y);
    }
  const double t_end = 0.1 / p.nu;
  const int64_t steps = 200;
  Trajectory traj = simulate_navier_stokes(p, g, ic, 2, t_end / steps, steps);
  const double decay = std::exp(-2.0 * p.nu * t_end);
  double max_rel = 0.0;
  for (int64_t i = 0; i < n * n; ++i) {
    const double expect = ic.vec()[i] * decay;
    if (std::abs(expect) < 0.1) continue;  // avoid near-zero denominators
    max_rel = std::max(max_rel,
                       std::abs(traj.data.vec()[n * n + i] - expect) / std::abs(expect));
  }
  CHECK(max_rel < 0.01);
}

TEST_CASE("navier-stokes: mean vorticity drift below 1e-6 per step") {
  const int64_t n = 32;
  GridSpec g = periodic_grid(n, 40.0);
  Rng rng(2);
  Tensor ic = random_field(g, 1, 4, rng);
  ic.vec().array() -= ic.vec().mean();
  Trajectory traj = simulate_navier_stokes({}, g, ic, 51, 0.05);
  for (int64_t t = 1; t <= 50; ++t) {
    const double m0 = traj.data.vec().segment((t - 1) * n * n, n * n).mean();
    const double m1 = traj.data.vec().segment(t * n * n, n * n).mean();
    CHECK(std::abs(m1 - m0) < 1e-6);
  }
}

TEST_CASE("navier-stokes: zero field with zero forcing stays zero") {
  GridSpec g = periodic_grid(16, 1.0);
  NavierStokesParams p;
  p.forcing_amplitude = 0.0;
  Tensor ic({1, 16, 16});
  ic.vec().setZero();
  Trajectory traj = simulate_navier_stokes(p, g, ic, 5, 0.05);
  CHECK(max_abs(traj.data) == 0.0);
}

TEST_CASE("swift-hohenberg: zero fixed point and linear growth rate") {
  const int64_t n = 64;
  const double length = 8.0 * M_PI;  // mode m has wavenumber m/4
  GridSpec g = periodic_grid(n, length);
  SwiftHohenbergParams p;  // r = 0.7, g = 1.0

  Tensor zero({1, n, n});
  zero.vec().setZero();
  CHECK(max_abs(simulate_swift_hohenberg(p, g, zero, 5, 0.01).data) == 0.0);

  // u = 1e-4 cos(kx) grows like exp(sigma t) with sigma = r + 2k^2 - k^4
  // while |u| stays small enough for the nonlinear terms to be negligible.
  for (int64_t m : {2, 4, 5}) {
    const double k = 2.0 * M_PI * static_cast<double>(m) / length;
    const double sigma = p.r + 2.0 * k * k - k * k * k * k;
    Tensor ic({1, n, n});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        ic.vec()[i * n + j] =
            1e-4 * std::cos(k * length * static_cast<double>(j) / n);
    const double t_end = 0.5;
    const int64_t steps = 100;
    Trajectory traj = simulate_swift_hohenberg(p, g, ic, 2, t_end / steps, steps);
    const double a0 = max_abs(ic);
    const double a1 = max_abs(Tensor({n * n}, traj.data.vec().tail(n * n)));
    const double measured = std::log(a1 / a0) / t_end;
    CHECK(std::abs(measured - sigma) < 0.05 * std::abs(sigma));
  }
}

TEST_CASE("swift-hohenberg: patterns grow from small initial data") {
  const int64_t n = 32;
  GridSpec g = periodic_grid(n, 20.0 * M_PI);
  Rng rng(7);
  Tensor ic = random_field(g, 1, 4, rng);
  ic.vec() *= 0.01;
  Trajectory traj = simulate_swift_hohenberg({}, g, ic, 2, 0.05, 400);
  Eigen::VectorXd last = traj.data.vec().tail(n * n);
  CHECK(std::sqrt((last.array() - last.mean()).square().mean()) > 0.1);
}

TEST_CASE("solver blow-up guard raises instead of returning garbage") {
  GridSpec g = periodic_grid(16, 40.0);
  Rng rng(3);
  Tensor ic = random_field(g, 1, 4, rng);
  ic.vec() *= 100.0;
  CHECK_THROWS_AS(simulate_navier_stokes({}, g, ic, 50, 5.0),
                  BlowupError);
}

TEST_CASE("cylinder flow: viscosity mapping and mass conservation") {
  CylinderFlowParams p;
  p.re = 500.0;
  CHECK(cylinder_dynamic_viscosity(p) == doctest::Approx(3.2e-5).epsilon(1e-12));

  // Periodic boundaries: BGK collision and bounce-back both conserve the
  // zeroth moment exactly, so total mass must hold to round-off.
  GridSpec g;
  g.height = 16;
  g.width = 32;
  g.boundary = Boundary::kPeriodic;
  p.warmup_steps = 0;
  p.lattice_ny = 16;
  std::vector<double> mass = lbm_mass_trace(p, g, 200);
  REQUIRE(mass.size() >= 2);
  for (size_t i = 1; i < mass.size(); ++i)
    CHECK(std::abs(mass[i] - mass[i - 1]) / mass[0] < 1e-10);
}

TEST_CASE("cylinder flow: uniform flow without obstacle stays uniform") {
  CylinderFlowParams p;
  p.obstacle = false;
  p.warmup_steps = 100;
  p.t_resample = 10;
  p.lattice_ny = 16;
  GridSpec g;
  g.height = 16;
  g.width = 32;
  g.boundary = Boundary::kPeriodic;  // no walls: equilibrium is stationary
  Trajectory traj = simulate_cylinder_flow(p, g, 3);
  // ux identical across the channel at every frame
  for (int64_t t = 0; t < 3; ++t) {
    Eigen::VectorXd ux = traj.data.vec().segment(t * 2 * 16 * 32, 16 * 32);
    CHECK(std::abs(ux.maxCoeff() - ux.minCoeff()) < 1e-8);
  }
}

TEST_CASE("min-max normalization and inversion") {
  Trajectory traj;
  traj.data = Tensor({2, 2, 2, 2});
  // channel 0 spans [2, 4]; channel 1 is constant
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t i = 0; i < 4; ++i) {
      traj.data.vec()[t * 8 + i] = 2.0 + i * 2.0 / 3.0;
      traj.data.vec()[t * 8 + 4 + i] = 5.0;
    }
  traj.data.vec()[1] = 3.0;  // value 3 in a [2, 4] channel -> 0.5
  Trajectory norm = normalize_minmax(traj);
  CHECK(norm.data.vec()[1] == doctest::Approx(0.5));
  CHECK(norm.data.vec().minCoeff() >= 0.0);
  CHECK(norm.data.vec().maxCoeff() <= 1.0);
  REQUIRE(norm.norm_stats->constant_channel.size() == 2);
  CHECK(norm.norm_stats->constant_channel[1]);
  CHECK(norm.data.vec()[4] == doctest::Approx(0.5));  // constant channel maps to 0.5

  Trajectory back = denormalize(norm);
  for (int64_t i = 0; i < 8; ++i)  // channel 0 round-trips
    CHECK(std::abs(back.data.vec()[(i / 4) * 8 + (i % 4)] -
                   traj.data.vec()[(i / 4) * 8 + (i % 4)]) < 1e-6);
}

TEST_CASE("downsample stride and identity") {
  Trajectory traj;
  traj.data = Tensor({10, 1, 8, 8});
  for (int64_t i = 0; i < traj.data.numel(); ++i) traj.data.vec()[i] = i;
  traj.dt = 0.1;

  Trajectory same = systems::downsample(traj, 1, 8, 8);
  CHECK(same.data.vec() == traj.data.vec());

  Trajectory strided = systems::downsample(traj, 3, 8, 8);
  CHECK(strided.data.dim(0) == 4);  // frames 0, 3, 6, 9
  CHECK(strided.data.vec()[0] == traj.data.vec()[0]);
  CHECK(strided.data.vec()[64] == traj.data.vec()[3 * 64]);
  CHECK(strided.dt == doctest::Approx(0.3));

  Trajectory small = systems::downsample(traj, 1, 4, 4);
  CHECK(small.data.dim(2) == 4);
}

TEST_CASE("trajectory generation is deterministic in the seed") {
  GridSpec g = periodic_grid(16, 20.0);
  Rng a(42), b(42), c(43);
  Tensor fa = random_field(g, 2, 4, a);
  Tensor fb = random_field(g, 2, 4, b);
  Tensor fc = random_field(g, 2, 4, c);
  CHECK(fa.vec() == fb.vec());
  CHECK(fa.vec() != fc.vec());

  Trajectory ta = simulate_lambda_omega({}, g, fa, 5, 0.05);
  Trajectory tb = simulate_lambda_omega({}, g, fb, 5, 0.05);
  CHECK(ta.data.vec() == tb.data.vec());
}
