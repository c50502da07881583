#pragma once

// Per-output-element bodies shared by the serial and OpenMP kernels, so the
// two differ only in how the outer loops are scheduled.

#include <cstddef>

#include "emgtl/nn/kernels.hpp"

namespace emgtl::nn::kernels::detail {

// out[n, oc, :, :]
inline void conv_forward_plane(const ConvShape& s, std::size_t n, std::size_t oc, const double* in,
                               const double* weight, const double* bias, double* out) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double* plane = out + (n * s.out_channels + oc) * oh * ow;
  const double b = bias ? bias[oc] : 0.0;
  for (std::size_t i = 0; i < oh * ow; ++i) plane[i] = b;
  for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
    const double* src = in + (n * s.in_channels + ic) * s.in_h * s.in_w;
    const double* w = weight + (oc * s.in_channels + ic) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const double wv = w[ky * s.kernel_w + kx];
        for (std::size_t y = 0; y < oh; ++y) {
          const double* row = src + (y + ky) * s.in_w + kx;
          double* dst = plane + y * ow;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += wv * row[x];
        }
      }
    }
  }
}

// grad_in[n, ic, :, :]
inline void conv_backward_input_plane(const ConvShape& s, std::size_t n, std::size_t ic, const double* grad_out,
                                      const double* weight, double* grad_in) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double* plane = grad_in + (n * s.in_channels + ic) * s.in_h * s.in_w;
  for (std::size_t i = 0; i < s.in_h * s.in_w; ++i) plane[i] = 0.0;
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    const double* g = grad_out + (n * s.out_channels + oc) * oh * ow;
    const double* w = weight + (oc * s.in_channels + ic) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const double wv = w[ky * s.kernel_w + kx];
        for (std::size_t y = 0; y < oh; ++y) {
          const double* grow = g + y * ow;
          double* dst = plane + (y + ky) * s.in_w + kx;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += wv * grow[x];
        }
      }
    }
  }
}

// grad_weight[oc, :, :, :] and grad_bias[oc]
inline void conv_backward_params_filter(const ConvShape& s, std::size_t oc, const double* in,
                                        const double* grad_out, double* grad_weight, double* grad_bias) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double bias_acc = 0.0;
  for (std::size_t n = 0; n < s.batch; ++n) {
    const double* g = grad_out + (n * s.out_channels + oc) * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) bias_acc += g[i];
  }
  if (grad_bias) grad_bias[oc] += bias_acc;
  for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
    double* gw = grad_weight + (oc * s.in_channels + ic) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        double acc = 0.0;
        for (std::size_t n = 0; n < s.batch; ++n) {
          const double* g = grad_out + (n * s.out_channels + oc) * oh * ow;
          const double* src = in + (n * s.in_channels + ic) * s.in_h * s.in_w;
          for (std::size_t y = 0; y < oh; ++y) {
            const double* row = src + (y + ky) * s.in_w + kx;
            const double* grow = g + y * ow;
            for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x];
          }
        }
        gw[ky * s.kernel_w + kx] += acc;
      }
    }
  }
}

inline void dense_forward_row(const DenseShape& s, std::size_t n, const double* in, const double* weight,
                              const double* bias, double* out) {
  const double* x = in + n * s.in_features;
  double* y = out + n * s.out_features;
  for (std::size_t o = 0; o < s.out_features; ++o) {
    const double* w = weight + o * s.in_features;
    double acc = bias ? bias[o] : 0.0;
    for (std::size_t i = 0; i < s.in_features; ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
}

inline void dense_backward_input_row(const DenseShape& s, std::size_t n, const double* grad_out,
                                     const double* weight, double* grad_in) {
  const double* g = grad_out + n * s.out_features;
  double* gx = grad_in + n * s.in_features;
  for (std::size_t i = 0; i < s.in_features; ++i) gx[i] = 0.0;
  for (std::size_t o = 0; o < s.out_features; ++o) {
    const double* w = weight + o * s.in_features;
    const double go = g[o];
    for (std::size_t i = 0; i < s.in_features; ++i) gx[i] += go * w[i];
  }
}

inline void dense_backward_params_row(const DenseShape& s, std::size_t o, const double* in,
                                      const double* grad_out, double* grad_weight, double* grad_bias) {
  double* gw = grad_weight + o * s.in_features;
  double bias_acc = 0.0;
  for (std::size_t n = 0; n < s.batch; ++n) {
    const double go = grad_out[n * s.out_features + o];
    bias_acc += go;
    const double* x = in + n * s.in_features;
    for (std::size_t i = 0; i < s.in_features; ++i) gw[i] += go * x[i];
  }
  if (grad_bias) grad_bias[o] += bias_acc;
}

}  // namespace emgtl::nn::kernels::detail
