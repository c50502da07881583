#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace emgtl::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Row-major dense tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void fill(double v);
  Tensor reshaped(Shape shape) const;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Rows [begin, end) along the first axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  Tensor gather_rows(std::span<const std::size_t> rows) const;

  Tensor& operator+=(const Tensor& other);

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace emgtl::nn
