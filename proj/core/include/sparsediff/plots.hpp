#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparsediff::plots {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

/// Fixed canvas geometry so tests can recover data coordinates from pixels.
constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 20;
constexpr int kMarginBottom = 40;

/// Deterministic palette, cycling by series index.
Rgb palette(size_t index);

/// Maps a data point into pixel coordinates for the given axis ranges
/// (the same mapping the plot functions use).
std::pair<int, int> map_point(double x, double y, double x_min, double x_max,
                              double y_min, double y_max);

/// Axis ranges chosen by the plot functions: min/max over all series with a
/// 5% pad (degenerate ranges padded by 1).
std::pair<double, double> axis_range(const std::vector<double>& values);

void line_plot(const std::string& path, const std::vector<Series>& series);
void scatter_plot(const std::string& path, const std::vector<Series>& series);
void bar_plot(const std::string& path, const std::vector<double>& values);

/// Grayscale heatmap of a (h, w) field scaled to [min, max].
void heatmap(const std::string& path, const std::vector<double>& field,
             int64_t h, int64_t w);

}  // namespace sparsediff::plots
