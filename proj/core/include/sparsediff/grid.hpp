#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sparsediff/tensor.hpp"

namespace sparsediff {

enum class Boundary { kPeriodic, kNoSlipObstacle };

struct GridSpec {
  int64_t height = 64;
  int64_t width = 64;
  double domain_length_x = 1.0;
  double domain_length_y = 1.0;
  Boundary boundary = Boundary::kPeriodic;

  void validate() const {
    if (height < 8 || width < 8)
      throw std::invalid_argument("GridSpec: grid must be at least 8x8");
    if (domain_length_x <= 0.0 || domain_length_y <= 0.0)
      throw std::invalid_argument("GridSpec: physical lengths must be positive");
  }
};

/// Per-channel (min, max) recorded by min-max normalization.
struct NormStats {
  std::vector<std::pair<double, double>> min_max;
  std::vector<bool> constant_channel;  // flagged when max == min
};

/// A (T, C, h, w) field sequence: the raw observable u.
struct Trajectory {
  Tensor data;  // (T, C, h, w)
  double dt = 1.0;
  std::vector<std::string> channel_names;
  std::optional<NormStats> norm_stats;

  int64_t steps() const { return data.dim(0); }
  int64_t channels() const { return data.dim(1); }
  int64_t height() const { return data.dim(2); }
  int64_t width() const { return data.dim(3); }

  double at(int64_t t, int64_t c, int64_t i, int64_t j) const {
    return data[((t * channels() + c) * height() + i) * width() + j];
  }
  double& at(int64_t t, int64_t c, int64_t i, int64_t j) {
    return data[((t * channels() + c) * height() + i) * width() + j];
  }
};

struct LambdaOmegaParams {
  double mu_u = 0.5;
  double mu_v = 0.5;
  double beta_lo = 1.0;  // reaction strength, distinct from the VQ commitment beta
};

struct NavierStokesParams {
  double nu = 1.0;
  double forcing_amplitude = 0.1;  // A in the sinusoidal forcing
  double phase_shift = 0.0;        // s
};

struct SwiftHohenbergParams {
  double r = 0.7;
  double g = 1.0;
};

struct CylinderFlowParams {
  double re = 500.0;
  double rho = 1.0;
  double u_m = 0.08;
  double d = 0.2;            // cylinder diameter as a fraction of channel height
  int64_t warmup_steps = 5000;
  int64_t t_resample = 300;  // lattice steps per stored frame
  bool obstacle = true;
  int64_t lattice_ny = 128;  // lattice resolution; aspect follows the target grid
};

using SystemParams = std::variant<LambdaOmegaParams, NavierStokesParams,
                                  SwiftHohenbergParams, CylinderFlowParams>;

inline std::string system_name(const SystemParams& p) {
  switch (p.index()) {
    case 0: return "lambda_omega";
    case 1: return "navier_stokes";
    case 2: return "swift_hohenberg";
    default: return "cylinder_flow";
  }
}

}  // namespace sparsediff
