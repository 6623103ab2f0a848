#pragma once

#include "sparsediff/grid.hpp"
#include "sparsediff/rng.hpp"

namespace sparsediff::systems {

/// Thrown when a solver field magnitude exceeds the blow-up guard (1e3),
/// which signals an unstable solver_dt.
struct BlowupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Band-limited Gaussian random field: modes |k| <= max_mode, unit variance.
Tensor random_field(const GridSpec& grid, int64_t channels, int64_t max_mode,
                    Rng& rng);

/// n_frames frames are stored, one every store_every solver steps of size
/// solver_dt; frame 0 is the initial condition. Pseudo-spectral on a periodic
/// grid, stiff linear part integrated exactly (integrating-factor RK4).
Trajectory simulate_lambda_omega(const LambdaOmegaParams& params,
                                 const GridSpec& grid, const Tensor& ic,
                                 int64_t n_frames, double solver_dt,
                                 int64_t store_every = 1);

/// Vorticity formulation; ic is (1, h, w) vorticity. The stream function is
/// solved from the Poisson equation each step with the mean mode projected out.
Trajectory simulate_navier_stokes(const NavierStokesParams& params,
                                  const GridSpec& grid, const Tensor& ic,
                                  int64_t n_frames, double solver_dt,
                                  int64_t store_every = 1);

Trajectory simulate_swift_hohenberg(const SwiftHohenbergParams& params,
                                    const GridSpec& grid, const Tensor& ic,
                                    int64_t n_frames, double solver_dt,
                                    int64_t store_every = 1);

/// D2Q9 lattice-Boltzmann channel flow past a cylinder; records n_frames of
/// (ux, uy) after warm-up, one frame per params.t_resample lattice steps,
/// bilinearly interpolated to grid.height x grid.width.
Trajectory simulate_cylinder_flow(const CylinderFlowParams& params,
                                  const GridSpec& grid, int64_t n_frames);

/// Lattice viscosity / relaxation mapping used by the LBM solver.
double cylinder_dynamic_viscosity(const CylinderFlowParams& params);

/// Diagnostic: total lattice mass before and after each collision-streaming
/// step; used by the conservation oracle.
std::vector<double> lbm_mass_trace(const CylinderFlowParams& params,
                                   const GridSpec& grid, int64_t n_steps);

Trajectory normalize_minmax(const Trajectory& traj);
/// Applies externally computed per-channel (min, max) stats, so a set of
/// trajectories can share one affine map (keeping their dynamics comparable).
Trajectory normalize_with_stats(const Trajectory& traj, const NormStats& stats);
/// Per-channel (min, max) over a whole set of trajectories.
NormStats minmax_stats(const std::vector<Trajectory>& trajs);
Trajectory denormalize(const Trajectory& traj);

/// Frame stride t_factor (tail truncated) + bilinear resample to (h, w).
Trajectory downsample(const Trajectory& traj, int64_t t_factor, int64_t target_h,
                      int64_t target_w);

}  // namespace sparsediff::systems
