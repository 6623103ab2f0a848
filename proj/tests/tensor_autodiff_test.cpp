#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "sparsediff/autodiff.hpp"
#include "sparsediff/rng.hpp"
#include "sparsediff/tensor.hpp"

using namespace sparsediff;
namespace ad = sparsediff::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.vec()[i] = scale * rng.normal();
  return t;
}

// Central-difference check of d(loss)/d(param) for every entry of every
// parameter. `loss` must rebuild the tape from the current parameter values
// on each call.
void check_gradients(const std::function<ad::Var(const std::vector<ad::Var>&)>& loss,
                     std::vector<ad::Var> params, double eps = 1e-5,
                     double tol = 1e-6) {
  ad::zero_grad(params);
  ad::Var root = loss(params);
  ad::backward(root);
  for (auto& p : params) {
    REQUIRE(p->requires_grad);
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const double analytic = p->grad.vec()[i];
      const double saved = p->value.vec()[i];
      p->value.vec()[i] = saved + eps;
      const double up = loss(params)->value.vec()[0];
      p->value.vec()[i] = saved - eps;
      const double down = loss(params)->value.vec()[0];
      p->value.vec()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      CHECK(std::abs(analytic - numeric) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(1) == 3);
  t.vec().setZero();
  CHECK(t.all_finite());

  Tensor empty({0, 4, 2});
  CHECK(empty.numel() == 0);
  CHECK_THROWS(Tensor({-1, 2}));

  Tensor r({6});
  r.reshape({2, 3});
  CHECK(r.rank() == 2);
  CHECK_THROWS(r.reshape({4}));
}

TEST_CASE("elementwise op gradients") {
  Rng rng(11);
  auto a = ad::param(random_tensor({3, 4}, rng));
  auto b = ad::param(random_tensor({3, 4}, rng));

  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::add(ad::cmul(p[0], p[1]), ad::sub(p[0], ad::scale(p[1], 0.5))));
      },
      {a, b});

  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum(ad::silu(ad::tanh_(p[0])));
      },
      {a});

  auto s = ad::param(Tensor({1}));
  s->value.vec()[0] = 0.7;
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::mean(ad::scale_by(p[0], p[1]));
      },
      {a, s});
}

TEST_CASE("mse and reductions") {
  Rng rng(3);
  auto a = ad::param(random_tensor({5}, rng));
  auto b = ad::param(random_tensor({5}, rng));
  double expect = (a->value.vec() - b->value.vec()).squaredNorm() / 5.0;
  CHECK(ad::mse(a, b)->value.vec()[0] == doctest::Approx(expect));
  check_gradients(
      [](const std::vector<ad::Var>& p) { return ad::mse(p[0], p[1]); },
      {a, b});
}

TEST_CASE("matmul linear transpose gradients") {
  Rng rng(5);
  auto x = ad::param(random_tensor({2, 3}, rng));
  auto w = ad::param(random_tensor({3, 4}, rng));
  auto b = ad::param(random_tensor({4}, rng));
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::linear(p[0], p[1], p[2]));
      },
      {x, w, b});
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::matmul(ad::transpose(p[0]), p[0]));
      },
      {x});
}

TEST_CASE("softmax rows are stochastic and differentiable") {
  Rng rng(7);
  auto logits = ad::param(random_tensor({4, 6}, rng, 2.0));
  auto sm = ad::softmax_rows(logits);
  for (int64_t r = 0; r < 4; ++r) {
    double row = 0;
    for (int64_t c = 0; c < 6; ++c) row += sm->value.vec()[r * 6 + c];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto weights = ad::constant(random_tensor({4, 6}, rng));
  check_gradients(
      [&](const std::vector<ad::Var>& p) {
        return ad::sum(ad::cmul(ad::softmax_rows(p[0]), weights));
      },
      {logits});
}

TEST_CASE("gather_rows selects and routes gradients") {
  Rng rng(9);
  auto table = ad::param(random_tensor({5, 3}, rng));
  std::vector<int32_t> idx = {4, 0, 0, 2};
  auto g = ad::gather_rows(table, idx);
  CHECK(g->value.dim(0) == 4);
  CHECK(g->value.vec()[0] == table->value.vec()[4 * 3 + 0]);
  check_gradients(
      [&](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::gather_rows(p[0], idx));
      },
      {table});
}

TEST_CASE("conv2d gradients with padding") {
  Rng rng(13);
  auto x = ad::param(random_tensor({1, 2, 5, 5}, rng));
  auto w = ad::param(random_tensor({3, 2, 3, 3}, rng, 0.5));
  auto b = ad::param(random_tensor({3}, rng));
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::conv2d(p[0], p[1], p[2], 1));
      },
      {x, w, b}, 1e-5, 1e-5);
}

TEST_CASE("group_norm normalizes and backpropagates") {
  Rng rng(17);
  auto x = ad::param(random_tensor({1, 4, 3, 3}, rng, 2.0));
  auto gamma = ad::param(random_tensor({4}, rng));
  auto beta = ad::param(random_tensor({4}, rng));
  auto y = ad::group_norm(x, gamma, beta, 2);
  CHECK(y->value.same_shape(x->value));
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::group_norm(p[0], p[1], p[2], 2));
      },
      {x, gamma, beta}, 1e-5, 1e-5);
}

TEST_CASE("pooling upsampling concat and channel bias") {
  Rng rng(19);
  auto x = ad::param(random_tensor({1, 2, 4, 4}, rng));
  auto y = ad::param(random_tensor({1, 3, 4, 4}, rng));
  auto s = ad::param(random_tensor({1, 2}, rng));

  auto pooled = ad::avg_pool2(x);
  CHECK(pooled->value.dim(2) == 2);
  auto up = ad::upsample_nearest2(pooled);
  CHECK(up->value.dim(2) == 4);

  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::upsample_nearest2(ad::avg_pool2(p[0])));
      },
      {x});
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::concat_channels(p[0], p[1]));
      },
      {x, y});
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::add_channel_bias(p[0], p[1]));
      },
      {x, s});
}

TEST_CASE("reshape and detach semantics") {
  Rng rng(23);
  auto x = ad::param(random_tensor({2, 6}, rng));
  auto r = ad::reshape(x, {3, 4});
  CHECK(r->value.dim(0) == 3);
  check_gradients(
      [](const std::vector<ad::Var>& p) {
        return ad::sum_sq(ad::reshape(p[0], {3, 4}));
      },
      {x});

  ad::zero_grad({x});
  auto loss = ad::sum(ad::cmul(ad::detach(x), x));
  ad::backward(loss);
  // detach blocks one of the two product paths, so d/dx = x (not 2x)
  for (int64_t i = 0; i < x->value.numel(); ++i)
    CHECK(x->grad.vec()[i] == doctest::Approx(x->value.vec()[i]));
}

TEST_CASE("dropout identity at rate zero, scaling otherwise") {
  Rng rng(29);
  auto x = ad::param(random_tensor({100}, rng));
  Rng drop(1);
  auto kept = ad::dropout(x, 0.0, drop);
  for (int64_t i = 0; i < 100; ++i)
    CHECK(kept->value.vec()[i] == x->value.vec()[i]);

  auto masked = ad::dropout(x, 0.5, drop);
  int64_t zeros = 0;
  for (int64_t i = 0; i < 100; ++i) {
    const double v = masked->value.vec()[i];
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(x->value.vec()[i] / 0.5));
    }
  }
  CHECK(zeros > 20);
  CHECK(zeros < 80);
}
