#include "sparsediff/plots.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace sparsediff::plots {

namespace {

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), pixels_(static_cast<size_t>(w * h) * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void marker(int x, int y, Rgb c) {
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) set(x + dx, y + dy, c);
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  void write_png(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write plot file: " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      std::fclose(fp);
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng failure writing: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w_),
                 static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h_; ++y)
      png_write_row(png, const_cast<png_bytep>(
                             pixels_.data() + static_cast<size_t>(y) * w_ * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
  }

 private:
  int w_, h_;
  std::vector<uint8_t> pixels_;
};

const Rgb kAxisColor{40, 40, 40};
const Rgb kGridColor{220, 220, 220};

void draw_axes(Canvas& c) {
  c.line(kMarginLeft, kMarginTop, kMarginLeft, kHeight - kMarginBottom, kAxisColor);
  c.line(kMarginLeft, kHeight - kMarginBottom, kWidth - kMarginRight,
         kHeight - kMarginBottom, kAxisColor);
  for (int i = 1; i <= 4; ++i) {
    int y = kMarginTop + i * (kHeight - kMarginTop - kMarginBottom) / 5;
    c.line(kMarginLeft + 1, y, kWidth - kMarginRight, y, kGridColor);
  }
}

std::pair<std::pair<double, double>, std::pair<double, double>> ranges(
    const std::vector<Series>& series) {
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  return {axis_range(xs), axis_range(ys)};
}

}  // namespace

Rgb palette(size_t index) {
  static const Rgb colors[] = {{214, 69, 65},  {31, 119, 180}, {44, 160, 44},
                               {148, 103, 189}, {255, 127, 14}, {23, 190, 207}};
  return colors[index % (sizeof(colors) / sizeof(colors[0]))];
}

std::pair<double, double> axis_range(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 1.0};
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (hi - lo < 1e-300) return {lo - 1.0, hi + 1.0};
  double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::pair<int, int> map_point(double x, double y, double x_min, double x_max,
                              double y_min, double y_max) {
  double fx = (x - x_min) / (x_max - x_min);
  double fy = (y - y_min) / (y_max - y_min);
  int px = kMarginLeft +
           static_cast<int>(std::lround(fx * (kWidth - kMarginLeft - kMarginRight)));
  int py = kHeight - kMarginBottom -
           static_cast<int>(std::lround(fy * (kHeight - kMarginTop - kMarginBottom)));
  return {px, py};
}

void line_plot(const std::string& path, const std::vector<Series>& series) {
  Canvas c(kWidth, kHeight);
  draw_axes(c);
  auto [xr, yr] = ranges(series);
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    Rgb color = palette(si);
    for (size_t i = 0; i + 1 < s.x.size(); ++i) {
      auto [x0, y0] = map_point(s.x[i], s.y[i], xr.first, xr.second, yr.first, yr.second);
      auto [x1, y1] = map_point(s.x[i + 1], s.y[i + 1], xr.first, xr.second,
                                yr.first, yr.second);
      c.line(x0, y0, x1, y1, color);
    }
  }
  c.write_png(path);
}

void scatter_plot(const std::string& path, const std::vector<Series>& series) {
  Canvas c(kWidth, kHeight);
  draw_axes(c);
  auto [xr, yr] = ranges(series);
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    Rgb color = palette(si);
    for (size_t i = 0; i < s.x.size(); ++i) {
      auto [px, py] = map_point(s.x[i], s.y[i], xr.first, xr.second, yr.first, yr.second);
      c.marker(px, py, color);
    }
  }
  c.write_png(path);
}

void bar_plot(const std::string& path, const std::vector<double>& values) {
  Canvas c(kWidth, kHeight);
  draw_axes(c);
  if (values.empty()) {
    c.write_png(path);
    return;
  }
  auto yr = axis_range(values);
  double y0 = std::max(0.0, yr.first);
  int n = static_cast<int>(values.size());
  int span = kWidth - kMarginLeft - kMarginRight;
  for (int i = 0; i < n; ++i) {
    int x0 = kMarginLeft + span * i / n + span / (6 * n);
    int x1 = kMarginLeft + span * (i + 1) / n - span / (6 * n);
    auto [_, py] = map_point(0, values[static_cast<size_t>(i)], 0, 1, yr.first, yr.second);
    auto [__, pbase] = map_point(0, y0, 0, 1, yr.first, yr.second);
    c.fill_rect(x0, py, x1, pbase, palette(static_cast<size_t>(i)));
  }
  c.write_png(path);
}

void heatmap(const std::string& path, const std::vector<double>& field,
             int64_t h, int64_t w) {
  if (static_cast<int64_t>(field.size()) != h * w)
    throw std::invalid_argument("heatmap: size mismatch");
  double lo = *std::min_element(field.begin(), field.end());
  double hi = *std::max_element(field.begin(), field.end());
  double span = hi - lo < 1e-300 ? 1.0 : hi - lo;
  Canvas c(static_cast<int>(w), static_cast<int>(h));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      auto v = static_cast<uint8_t>(
          std::lround(255.0 * (field[static_cast<size_t>(i * w + j)] - lo) / span));
      c.set(static_cast<int>(j), static_cast<int>(i), {v, v, v});
    }
  c.write_png(path);
}

}  // namespace sparsediff::plots
