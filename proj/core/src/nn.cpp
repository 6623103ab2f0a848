#include "sparsediff/nn.hpp"

#include <cmath>

namespace sparsediff::nn {

Linear::Linear(int64_t in, int64_t out, Rng& rng) {
  Tensor wt({in, out});
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (int64_t i = 0; i < wt.numel(); ++i) wt[i] = rng.uniform(-bound, bound);
  w = ad::param(std::move(wt));
  b = ad::param(Tensor({out}, 0.0));
}

Mlp::Mlp(const std::vector<int64_t>& dims, Act a, Rng& rng) : act(a) {
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    layers.emplace_back(dims[i], dims[i + 1], rng);
}

ad::Var Mlp::operator()(ad::Var x) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) {
      if (act == Act::kTanh) x = ad::tanh_(x);
      else if (act == Act::kSilu) x = ad::silu(x);
    }
  }
  return x;
}

Tensor Mlp::infer(const Tensor& x) const {
  int64_t bs = x.dim(0);
  Tensor cur = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    int64_t in = l.w->value.dim(0), out = l.w->value.dim(1);
    Tensor next({bs, out});
    next.mat(bs, out) = (cur.mat(bs, in) * l.w->value.mat(in, out)).rowwise() +
                        l.b->value.vec().transpose();
    if (i + 1 < layers.size()) {
      if (act == Act::kTanh) {
        next.vec() = next.vec().array().tanh();
      } else if (act == Act::kSilu) {
        for (int64_t j = 0; j < next.numel(); ++j)
          next[j] = next[j] / (1.0 + std::exp(-next[j]));
      }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<ad::Var> Mlp::params() const {
  std::vector<ad::Var> out;
  for (const auto& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  return out;
}

int64_t Mlp::param_count() const { return nn::param_count(params()); }

int64_t param_count(const std::vector<ad::Var>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p->value.numel();
  return n;
}

Adam::Adam(std::vector<ad::Var> params, double lr_, double beta1, double beta2,
           double eps)
    : lr(lr_), params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(Eigen::VectorXd::Zero(p->value.numel()));
    v_.emplace_back(Eigen::VectorXd::Zero(p->value.numel()));
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    p->ensure_grad();
    const auto& g = p->grad.vec();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square();
    p->value.vec().array() -=
        lr * (m_[i].array() / bc1) /
        ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace sparsediff::nn
