#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsediff {

/// Dense row-major N-d array of doubles. Shapes follow the (batch, channel,
/// height, width) convention where 4-d; lower ranks drop leading axes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), data_(Eigen::VectorXd::Zero(numel_of(shape_))) {}
  Tensor(std::vector<int64_t> shape, double fill)
      : shape_(std::move(shape)),
        data_(Eigen::VectorXd::Constant(numel_of(shape_), fill)) {}
  Tensor(std::vector<int64_t> shape, Eigen::VectorXd data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel_of(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, Eigen::VectorXd::Constant(1, v)); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return data_.size(); }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  Eigen::VectorXd& vec() { return data_; }
  const Eigen::VectorXd& vec() const { return data_; }

  /// View as a (rows, cols) row-major matrix; numel must factor accordingly.
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  mat(int64_t rows, int64_t cols) {
    if (rows * cols != numel()) throw std::invalid_argument("Tensor::mat: bad view");
    return {data_.data(), rows, cols};
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  mat(int64_t rows, int64_t cols) const {
    if (rows * cols != numel()) throw std::invalid_argument("Tensor::mat: bad view");
    return {data_.data(), rows, cols};
  }

  void reshape(std::vector<int64_t> shape) {
    if (numel_of(shape) != numel())
      throw std::invalid_argument("Tensor::reshape: element count mismatch");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const { return data_.allFinite(); }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i)
      out += std::to_string(s[i]) + (i + 1 < s.size() ? "," : "");
    return out + ")";
  }

 private:
  std::vector<int64_t> shape_;
  Eigen::VectorXd data_;
};

}  // namespace sparsediff
