#include <atomic>

#include "emgtl/parallel.hpp"
#include "kernel_detail.hpp"

namespace emgtl {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
}

Backend default_backend() { return g_backend.load(); }
void set_default_backend(Backend backend) { g_backend.store(backend); }

}  // namespace emgtl

namespace emgtl::nn::kernels {

namespace omp {

void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out) {
  const auto total = static_cast<std::ptrdiff_t>(s.batch * s.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    detail::conv_forward_plane(s, idx / s.out_channels, idx % s.out_channels, in, weight, bias, out);
  }
}

void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in) {
  const auto total = static_cast<std::ptrdiff_t>(s.batch * s.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    detail::conv_backward_input_plane(s, idx / s.in_channels, idx % s.in_channels, grad_out, weight, grad_in);
  }
}

void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias) {
  const auto total = static_cast<std::ptrdiff_t>(s.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oc = 0; oc < total; ++oc)
    detail::conv_backward_params_filter(s, static_cast<std::size_t>(oc), in, grad_out, grad_weight, grad_bias);
}

void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out) {
  const auto total = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < total; ++n)
    detail::dense_forward_row(s, static_cast<std::size_t>(n), in, weight, bias, out);
}

void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in) {
  const auto total = static_cast<std::ptrdiff_t>(s.batch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < total; ++n)
    detail::dense_backward_input_row(s, static_cast<std::size_t>(n), grad_out, weight, grad_in);
}

void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias) {
  const auto total = static_cast<std::ptrdiff_t>(s.out_features);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < total; ++o)
    detail::dense_backward_params_row(s, static_cast<std::size_t>(o), in, grad_out, grad_weight, grad_bias);
}

}  // namespace omp

#define EMGTL_DISPATCH(fn, ...) \
  (default_backend() == Backend::Serial ? serial::fn(__VA_ARGS__) : omp::fn(__VA_ARGS__))

void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out) {
  EMGTL_DISPATCH(conv2d_forward, s, in, weight, bias, out);
}
void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in) {
  EMGTL_DISPATCH(conv2d_backward_input, s, grad_out, weight, grad_in);
}
void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias) {
  EMGTL_DISPATCH(conv2d_backward_params, s, in, grad_out, grad_weight, grad_bias);
}
void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out) {
  EMGTL_DISPATCH(dense_forward, s, in, weight, bias, out);
}
void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in) {
  EMGTL_DISPATCH(dense_backward_input, s, grad_out, weight, grad_in);
}
void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias) {
  EMGTL_DISPATCH(dense_backward_params, s, in, grad_out, grad_weight, grad_bias);
}

#undef EMGTL_DISPATCH

}  // namespace emgtl::nn::kernels
