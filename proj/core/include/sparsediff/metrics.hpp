#pragma once

#include <cstdint>
#include <vector>

#include "sparsediff/tensor.hpp"

namespace sparsediff::metrics {

/// Root mean squared error over all elements; shapes must match.
double rmse(const Tensor& pred, const Tensor& truth);

/// Windowed structural similarity between two single-channel 2D fields.
/// 7x7 uniform window, stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 with
/// data range L = 1 (fields are expected normalized to [0, 1]).
/// Multi-channel (C, h, w) inputs are averaged over channels.
double ssim(const Tensor& pred, const Tensor& truth, int64_t window = 7,
            double data_range = 1.0);

struct MetricSeries {
  std::vector<double> rmse_per_step;
  std::vector<double> ssim_per_step;
  bool truncated = false;  // prediction/truth length mismatch was clipped

  double mean_rmse() const;
  double mean_ssim() const;
  double final_rmse() const { return rmse_per_step.back(); }
  double final_ssim() const { return ssim_per_step.back(); }
};

/// Per-step metrics of a predicted field sequence (T, C, h, w) against the
/// ground truth of the same layout. A length mismatch truncates to the
/// shorter sequence and sets `truncated`.
MetricSeries evaluate_rollout(const Tensor& predicted, const Tensor& truth);

struct Aggregate {
  double mean = 0.0, stddev = 0.0;
  int64_t n = 0;
};

/// Arithmetic mean and (population) standard deviation of a sample.
Aggregate aggregate(const std::vector<double>& values);

double median(std::vector<double> values);

}  // namespace sparsediff::metrics
