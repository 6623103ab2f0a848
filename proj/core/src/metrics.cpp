#include "sparsediff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparsediff::metrics {

double rmse(const Tensor& pred, const Tensor& truth) {
  if (!pred.same_shape(truth))
    throw std::invalid_argument("rmse: shape mismatch " +
                                Tensor::shape_str(pred.shape()) + " vs " +
                                Tensor::shape_str(truth.shape()));
  return std::sqrt((pred.vec() - truth.vec()).squaredNorm() /
                   static_cast<double>(pred.numel()));
}

namespace {

/// SSIM of one channel over all fully-contained windows; unbiased
/// variance/covariance normalization (NP / (NP - 1)).
double ssim_plane(const double* a, const double* b, int64_t h, int64_t w,
                  int64_t win, double c1, double c2) {
  if (h < win || w < win)
    throw std::invalid_argument("ssim: field smaller than the window");
  const double np = static_cast<double>(win * win);
  const double cov_norm = np / (np - 1.0);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i + win <= h; ++i) {
    for (int64_t j = 0; j + win <= w; ++j) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int64_t di = 0; di < win; ++di)
        for (int64_t dj = 0; dj < win; ++dj) {
          double x = a[(i + di) * w + j + dj];
          double y = b[(i + di) * w + j + dj];
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      double ma = sa / np, mb = sb / np;
      double va = cov_norm * (saa / np - ma * ma);
      double vb = cov_norm * (sbb / np - mb * mb);
      double cov = cov_norm * (sab / np - ma * mb);
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& truth, int64_t window,
            double data_range) {
  if (!pred.same_shape(truth))
    throw std::invalid_argument("ssim: shape mismatch");
  if (pred.rank() != 2 && pred.rank() != 3)
    throw std::invalid_argument("ssim: expected (h, w) or (C, h, w)");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  int64_t C = pred.rank() == 3 ? pred.dim(0) : 1;
  int64_t h = pred.dim(pred.rank() - 2), w = pred.dim(pred.rank() - 1);
  double total = 0.0;
  for (int64_t c = 0; c < C; ++c)
    total += ssim_plane(pred.vec().data() + c * h * w,
                        truth.vec().data() + c * h * w, h, w, window, c1, c2);
  return total / static_cast<double>(C);
}

double MetricSeries::mean_rmse() const {
  return aggregate(rmse_per_step).mean;
}

double MetricSeries::mean_ssim() const {
  return aggregate(ssim_per_step).mean;
}

MetricSeries evaluate_rollout(const Tensor& predicted, const Tensor& truth) {
  if (predicted.rank() != 4 || truth.rank() != 4)
    throw std::invalid_argument("evaluate_rollout: expected (T, C, h, w)");
  for (int d = 1; d < 4; ++d)
    if (predicted.dim(d) != truth.dim(d))
      throw std::invalid_argument("evaluate_rollout: field shape mismatch");
  int64_t T = std::min(predicted.dim(0), truth.dim(0));
  int64_t C = predicted.dim(1), h = predicted.dim(2), w = predicted.dim(3);
  int64_t frame = C * h * w;
  MetricSeries series;
  series.truncated = predicted.dim(0) != truth.dim(0);
  for (int64_t t = 0; t < T; ++t) {
    Tensor p({C, h, w}), g({C, h, w});
    p.vec() = predicted.vec().segment(t * frame, frame);
    g.vec() = truth.vec().segment(t * frame, frame);
    series.rmse_per_step.push_back(rmse(p, g));
    series.ssim_per_step.push_back(ssim(p, g));
  }
  return series;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = static_cast<int64_t>(values.size());
  if (a.n == 0) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  for (double v : values) a.stddev += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(a.stddev / static_cast<double>(a.n));
  return a;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace sparsediff::metrics
