#pragma once

#include <cstdint>
#include <vector>

#include "sparsediff/autodiff.hpp"
#include "sparsediff/rng.hpp"

namespace sparsediff::nn {

/// Fully connected layer, weights (in, out) with Xavier-uniform init.
struct Linear {
  ad::Var w, b;

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng);
  ad::Var operator()(const ad::Var& x) const { return ad::linear(x, w, b); }
  std::vector<ad::Var> params() const { return {w, b}; }
};

enum class Act { kTanh, kSilu, kNone };

/// Stack of Linear layers with an activation between them (not after the last).
struct Mlp {
  std::vector<Linear> layers;
  Act act = Act::kSilu;

  Mlp() = default;
  Mlp(const std::vector<int64_t>& dims, Act act, Rng& rng);
  ad::Var operator()(ad::Var x) const;
  /// Tape-free forward for inference paths.
  Tensor infer(const Tensor& x) const;
  std::vector<ad::Var> params() const;
  int64_t param_count() const;
};

/// Adaptive-moment SGD. State is positional: the param list must be stable.
class Adam {
 public:
  explicit Adam(std::vector<ad::Var> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad() { ad::zero_grad(params_); }
  const std::vector<ad::Var>& params() const { return params_; }
  double lr;

 private:
  std::vector<ad::Var> params_;
  std::vector<Eigen::VectorXd> m_, v_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

int64_t param_count(const std::vector<ad::Var>& params);

}  // namespace sparsediff::nn
