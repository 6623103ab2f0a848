#include <doctest.h>

#include <cmath>
#include <vector>

#include "sparsediff/metrics.hpp"
#include "sparsediff/rng.hpp"

using namespace sparsediff;
using namespace sparsediff::metrics;

namespace {

// Direct SSIM reference: uniform square window over fully-valid positions,
// sample (unbiased) covariance normalization, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
double ssim_reference(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      int64_t h, int64_t w, int64_t win, double L) {
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const int64_t np = win * win;
  double total = 0;
  int64_t count = 0;
  for (int64_t i = 0; i + win <= h; ++i)
    for (int64_t j = 0; j + win <= w; ++j) {
      double ma = 0, mb = 0;
      for (int64_t u = 0; u < win; ++u)
        for (int64_t v = 0; v < win; ++v) {
          ma += a[(i + u) * w + j + v];
          mb += b[(i + u) * w + j + v];
        }
      ma /= np;
      mb /= np;
      double va = 0, vb = 0, cov = 0;
      for (int64_t u = 0; u < win; ++u)
        for (int64_t v = 0; v < win; ++v) {
          const double da = a[(i + u) * w + j + v] - ma;
          const double db = b[(i + u) * w + j + v] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= (np - 1);
      vb /= (np - 1);
      cov /= (np - 1);
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

Tensor field(int64_t c, int64_t h, int64_t w) { return Tensor({c, h, w}); }

}  // namespace

TEST_CASE("rmse basics") {
  Tensor a = field(1, 2, 2), b = field(1, 2, 2);
  a.vec() << 1, 2, 3, 4;
  b.vec() << 1, 2, 3, 4;
  CHECK(rmse(a, b) == 0.0);
  b.vec() << 2, 3, 4, 5;
  CHECK(rmse(a, b) == doctest::Approx(1.0));
  b.vec() << 1, 2, 3, 8;
  CHECK(rmse(a, b) == doctest::Approx(2.0));  // sqrt(16/4)
  CHECK_THROWS(rmse(a, field(1, 3, 3)));
}

TEST_CASE("ssim agrees with a direct reference implementation") {
  Rng rng(5);
  const int64_t h = 24, w = 20;
  Tensor a = field(1, h, w), b = field(1, h, w);
  for (int64_t i = 0; i < h * w; ++i) {
    const double base = 0.5 + 0.3 * std::sin(0.3 * (i % w)) * std::cos(0.2 * (i / w));
    a.vec()[i] = base;
    b.vec()[i] = base + 0.05 * rng.normal();
  }
  const double got = ssim(a, b, 7, 1.0);
  const double expect = ssim_reference(a.vec(), b.vec(), h, w, 7, 1.0);
  CHECK(std::abs(got - expect) < 1e-6);
  CHECK(got < 1.0);
  CHECK(got > 0.0);

  // identical images score exactly 1
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim averages channels and respects the window size") {
  Rng rng(9);
  Tensor a = field(2, 16, 16), b = field(2, 16, 16);
  for (int64_t i = 0; i < a.numel(); ++i) {
    a.vec()[i] = rng.uniform();
    b.vec()[i] = rng.uniform();
  }
  Tensor a0 = field(1, 16, 16), b0 = field(1, 16, 16);
  a0.vec() = a.vec().head(256);
  b0.vec() = b.vec().head(256);
  Tensor a1 = field(1, 16, 16), b1 = field(1, 16, 16);
  a1.vec() = a.vec().tail(256);
  b1.vec() = b.vec().tail(256);
  CHECK(ssim(a, b) ==
        doctest::Approx(0.5 * (ssim(a0, b0) + ssim(a1, b1))).epsilon(1e-12));

  CHECK(ssim(a, b, 5) != ssim(a, b, 7));
}

TEST_CASE("anti-correlated structure scores negative") {
  const int64_t n = 16;
  Tensor a = field(1, n, n), b = field(1, n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      const double v = ((i + j) % 2 == 0) ? 1.0 : 0.0;
      a.vec()[i * n + j] = v;
      b.vec()[i * n + j] = 1.0 - v;  // inverted checkerboard
    }
  CHECK(ssim(a, b) < 0.0);
}

TEST_CASE("rollout evaluation truncates mismatched lengths") {
  Rng rng(3);
  Tensor pred({4, 1, 12, 12}), truth({6, 1, 12, 12});
  for (int64_t i = 0; i < pred.numel(); ++i) pred.vec()[i] = rng.uniform();
  for (int64_t i = 0; i < truth.numel(); ++i) truth.vec()[i] = rng.uniform();
  MetricSeries s = evaluate_rollout(pred, truth);
  CHECK(s.truncated);
  REQUIRE(s.rmse_per_step.size() == 4);
  REQUIRE(s.ssim_per_step.size() == 4);
  CHECK(s.mean_rmse() > 0);
  CHECK(s.final_rmse() == s.rmse_per_step[3]);

  // per-step values agree with direct calls
  Tensor p0({1, 12, 12}, pred.vec().head(144));
  Tensor t0({1, 12, 12}, truth.vec().head(144));
  CHECK(s.rmse_per_step[0] == doctest::Approx(rmse(p0, t0)));
  CHECK(s.ssim_per_step[0] == doctest::Approx(ssim(p0, t0)));
}

TEST_CASE("aggregation and median") {
  Aggregate agg = aggregate({1.0, 2.0, 3.0, 4.0});
  CHECK(agg.mean == doctest::Approx(2.5));
  CHECK(agg.stddev == doctest::Approx(std::sqrt(1.25)));

  CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
  CHECK(median({7.0}) == doctest::Approx(7.0));
}
