#pragma once

#include <cstddef>

#include "emgtl/parallel.hpp"

// Convolution and dense kernels. Every kernel exists as a serial reference
// and an OpenMP version; both accumulate each output element in the same
// order, so their results are bitwise identical.
namespace emgtl::nn::kernels {

/// NCHW input, OIHW weights, stride 1, no padding.
struct ConvShape {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;

  std::size_t out_h() const { return in_h - kernel_h + 1; }
  std::size_t out_w() const { return in_w - kernel_w + 1; }
};

/// Row-major (batch x in) input, (out x in) weights.
struct DenseShape {
  std::size_t batch = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

namespace serial {
void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out);
/// Overwrites grad_in.
void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in);
/// Accumulates into grad_weight and grad_bias.
void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias);
void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out);
void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in);
void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out);
/// Overwrites grad_in.
void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in);
/// Accumulates into grad_weight and grad_bias.
void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias);
void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out);
void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in);
void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias);
}  // namespace omp

// Dispatch on emgtl::default_backend().
void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out);
void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in);
void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias);
void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out);
void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in);
void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias);

}  // namespace emgtl::nn::kernels
