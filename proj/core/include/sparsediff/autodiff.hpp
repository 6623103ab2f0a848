#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sparsediff/rng.hpp"
#include "sparsediff/tensor.hpp"

namespace sparsediff::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One tape node. Gradients accumulate into `grad` during backward().
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  }
};

Var constant(Tensor v);
Var param(Tensor v);

/// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// ---- elementwise / shape ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var scale_by(const Var& a, const Var& s);  // s is a {1} scalar Var
Var tanh_(const Var& a);
Var silu(const Var& a);
Var reshape(const Var& a, std::vector<int64_t> shape);
Var detach(const Var& a);
Var dropout(const Var& a, double rate, Rng& rng);

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);
Var sum_sq(const Var& a);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);  // (m,k) x (k,n)
Var transpose(const Var& a);             // 2-d
Var linear(const Var& x, const Var& w, const Var& b);  // (B,in)x(in,out)+(out)
Var softmax_rows(const Var& a);          // 2-d, softmax over each row
Var gather_rows(const Var& table, std::vector<int32_t> idx);  // (K,d) -> (n,d)

// ---- conv / image ops; x is (B,C,H,W) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps = 1e-5);
Var avg_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var add_channel_bias(const Var& x, const Var& s);  // s: (B,C) or (C)

}  // namespace sparsediff::ad
