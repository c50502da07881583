#include "kernel_detail.hpp"

namespace emgtl::nn::kernels::serial {

void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias, double* out) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) detail::conv_forward_plane(s, n, oc, in, weight, bias, out);
}

void conv2d_backward_input(const ConvShape& s, const double* grad_out, const double* weight, double* grad_in) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t ic = 0; ic < s.in_channels; ++ic)
      detail::conv_backward_input_plane(s, n, ic, grad_out, weight, grad_in);
}

void conv2d_backward_params(const ConvShape& s, const double* in, const double* grad_out, double* grad_weight,
                            double* grad_bias) {
  for (std::size_t oc = 0; oc < s.out_channels; ++oc)
    detail::conv_backward_params_filter(s, oc, in, grad_out, grad_weight, grad_bias);
}

void dense_forward(const DenseShape& s, const double* in, const double* weight, const double* bias, double* out) {
  for (std::size_t n = 0; n < s.batch; ++n) detail::dense_forward_row(s, n, in, weight, bias, out);
}

void dense_backward_input(const DenseShape& s, const double* grad_out, const double* weight, double* grad_in) {
  for (std::size_t n = 0; n < s.batch; ++n) detail::dense_backward_input_row(s, n, grad_out, weight, grad_in);
}

void dense_backward_params(const DenseShape& s, const double* in, const double* grad_out, double* grad_weight,
                           double* grad_bias) {
  for (std::size_t o = 0; o < s.out_features; ++o)
    detail::dense_backward_params_row(s, o, in, grad_out, grad_weight, grad_bias);
}

}  // namespace emgtl::nn::kernels::serial
