#include "emgtl/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "emgtl/errors.hpp"

namespace emgtl::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_))
    throw DataError("tensor data length " + std::to_string(values_.size()) + " does not match shape " +
                    shape_string(shape_));
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size())
    throw DataError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  const std::size_t row = values_.size() / std::max<std::size_t>(shape_.at(0), 1);
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                                  values_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  const std::size_t row = values_.size() / std::max<std::size_t>(shape_.at(0), 1);
  Shape s = shape_;
  s[0] = rows.size();
  Tensor out(std::move(s));
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * row));
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other))
    throw DataError("tensor shape mismatch: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

}  // namespace emgtl::nn
