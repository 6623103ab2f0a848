#include <array>
#include <cmath>

#include "sparsediff/systems.hpp"

namespace sparsediff::systems {

namespace {

// D2Q9 stencil.
constexpr int kQ = 9;
constexpr std::array<int, kQ> ex = {0, 1, 0, -1, 0, 1, -1, -1, 1};
constexpr std::array<int, kQ> ey = {0, 0, 1, 0, -1, 1, 1, -1, -1};
constexpr std::array<int, kQ> opp = {0, 3, 4, 1, 2, 7, 8, 5, 6};
constexpr std::array<double, kQ> wq = {4.0 / 9,  1.0 / 9,  1.0 / 9,
                                       1.0 / 9,  1.0 / 9,  1.0 / 36,
                                       1.0 / 36, 1.0 / 36, 1.0 / 36};

double feq(int q, double rho, double ux, double uy) {
  double eu = ex[q] * ux + ey[q] * uy;
  double u2 = ux * ux + uy * uy;
  return wq[q] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - 1.5 * u2);
}

double bilinear(const std::vector<double>& src, int64_t ny, int64_t nx, double y,
                double x) {
  y = std::min(std::max(y, 0.0), static_cast<double>(ny - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(nx - 1));
  int64_t i0 = static_cast<int64_t>(y), j0 = static_cast<int64_t>(x);
  int64_t i1 = std::min(i0 + 1, ny - 1), j1 = std::min(j0 + 1, nx - 1);
  double fy = y - static_cast<double>(i0), fx = x - static_cast<double>(j0);
  return (1 - fy) * ((1 - fx) * src[i0 * nx + j0] + fx * src[i0 * nx + j1]) +
         fy * ((1 - fx) * src[i1 * nx + j0] + fx * src[i1 * nx + j1]);
}

struct Lattice {
  int64_t nx, ny, ncell;
  double omega, rho0, u_m;
  bool channel;  // inlet/outlet + walls; otherwise fully periodic
  std::vector<uint8_t> solid;
  std::vector<std::vector<double>> f, ftmp;
  std::vector<double> rho, ux, uy;

  Lattice(const CylinderFlowParams& p, const GridSpec& grid) {
    ny = p.lattice_ny;
    nx = ny * grid.width / grid.height;
    ncell = nx * ny;
    channel = grid.boundary == Boundary::kNoSlipObstacle;
    rho0 = p.rho;
    u_m = p.u_m;

    const double d_cells = p.d * static_cast<double>(ny);
    const double nu_lat = p.u_m * d_cells / p.re;
    const double tau = 3.0 * nu_lat + 0.5;
    if (tau <= 0.5)
      throw std::invalid_argument(
          "cylinder_flow: relaxation time tau <= 0.5 (unstable viscosity mapping)");
    omega = 1.0 / tau;

    solid.assign(ncell, 0);
    if (p.obstacle) {
      const double cx = static_cast<double>(nx) / 4.0;
      const double cy = static_cast<double>(ny) / 2.0;
      const double r2 = 0.25 * d_cells * d_cells;
      for (int64_t y = 0; y < ny; ++y)
        for (int64_t x = 0; x < nx; ++x) {
          double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
          if (dx * dx + dy * dy <= r2) solid[y * nx + x] = 1;
        }
    }

    f.assign(kQ, std::vector<double>(ncell));
    ftmp.assign(kQ, std::vector<double>(ncell));
    rho.assign(ncell, rho0);
    ux.assign(ncell, 0);
    uy.assign(ncell, 0);
    for (int64_t y = 0; y < ny; ++y)
      for (int64_t x = 0; x < nx; ++x) {
        // Small vertical shear perturbation triggers vortex shedding.
        double uy0 = channel ? 1e-4 * u_m *
                                   std::sin(2.0 * M_PI * static_cast<double>(x) /
                                            static_cast<double>(nx))
                             : 0.0;
        for (int q = 0; q < kQ; ++q) f[q][y * nx + x] = feq(q, rho0, u_m, uy0);
      }
  }

  void moments() {
    for (int64_t i = 0; i < ncell; ++i) {
      double r = 0, mx = 0, my = 0;
      for (int q = 0; q < kQ; ++q) {
        r += f[q][i];
        mx += f[q][i] * ex[q];
        my += f[q][i] * ey[q];
      }
      rho[i] = r;
      ux[i] = solid[i] ? 0.0 : mx / r;
      uy[i] = solid[i] ? 0.0 : my / r;
    }
  }

  void step() {
    moments();
    // BGK collide; solid cells reflect populations instead (bounce-back).
    for (int64_t i = 0; i < ncell; ++i) {
      if (solid[i]) {
        std::array<double, kQ> tmp;
        for (int q = 0; q < kQ; ++q) tmp[q] = f[opp[q]][i];
        for (int q = 0; q < kQ; ++q) f[q][i] = tmp[q];
      } else {
        for (int q = 0; q < kQ; ++q)
          f[q][i] += omega * (feq(q, rho[i], ux[i], uy[i]) - f[q][i]);
      }
    }
    // Stream with periodic wrap; channel walls handled after.
    for (int q = 0; q < kQ; ++q)
      for (int64_t y = 0; y < ny; ++y) {
        int64_t yd = (y + ey[q] + ny) % ny;
        for (int64_t x = 0; x < nx; ++x) {
          int64_t xd = (x + ex[q] + nx) % nx;
          ftmp[q][yd * nx + xd] = f[q][y * nx + x];
        }
      }
    f.swap(ftmp);
    if (channel) {
      for (int64_t x = 0; x < nx; ++x) {
        for (int q : {2, 5, 6}) f[q][x] = f[opp[q]][x];
        for (int q : {4, 7, 8}) f[q][(ny - 1) * nx + x] = f[opp[q]][(ny - 1) * nx + x];
      }
      for (int64_t y = 0; y < ny; ++y) {
        for (int q = 0; q < kQ; ++q) {
          f[q][y * nx] = feq(q, rho0, u_m, 0.0);
          f[q][y * nx + nx - 1] = f[q][y * nx + nx - 2];
        }
      }
    }
  }

  double total_mass() const {
    double m = 0;
    for (int q = 0; q < kQ; ++q)
      for (int64_t i = 0; i < ncell; ++i) m += f[q][i];
    return m;
  }
};

}  // namespace

double cylinder_dynamic_viscosity(const CylinderFlowParams& p) {
  if (p.re <= 0) throw std::invalid_argument("cylinder_flow: Re must be positive");
  return p.rho * p.u_m * p.d / p.re;
}

std::vector<double> lbm_mass_trace(const CylinderFlowParams& params,
                                   const GridSpec& grid, int64_t n_steps) {
  Lattice lat(params, grid);
  std::vector<double> trace;
  trace.push_back(lat.total_mass());
  for (int64_t s = 0; s < n_steps; ++s) {
    lat.step();
    trace.push_back(lat.total_mass());
  }
  return trace;
}

Trajectory simulate_cylinder_flow(const CylinderFlowParams& params,
                                  const GridSpec& grid, int64_t n_frames) {
  grid.validate();
  Lattice lat(params, grid);
  for (int64_t s = 0; s < params.warmup_steps; ++s) lat.step();

  Trajectory traj;
  traj.data = Tensor({n_frames, 2, grid.height, grid.width});
  traj.dt = static_cast<double>(params.t_resample);
  traj.channel_names = {"ux", "uy"};
  const double sy = static_cast<double>(lat.ny) / static_cast<double>(grid.height);
  const double sx = static_cast<double>(lat.nx) / static_cast<double>(grid.width);
  for (int64_t fr = 0; fr < n_frames; ++fr) {
    if (fr > 0)
      for (int64_t s = 0; s < params.t_resample; ++s) lat.step();
    lat.moments();
    for (int64_t i = 0; i < lat.ncell; ++i)
      if (lat.rho[i] <= 0.0) throw BlowupError("cylinder_flow: non-positive density");
    for (int64_t i = 0; i < grid.height; ++i)
      for (int64_t j = 0; j < grid.width; ++j) {
        double y = (static_cast<double>(i) + 0.5) * sy - 0.5;
        double x = (static_cast<double>(j) + 0.5) * sx - 0.5;
        traj.at(fr, 0, i, j) = bilinear(lat.ux, lat.ny, lat.nx, y, x);
        traj.at(fr, 1, i, j) = bilinear(lat.uy, lat.ny, lat.nx, y, x);
      }
  }
  return traj;
}

}  // namespace sparsediff::systems
