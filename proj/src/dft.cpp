#include "emgtl/dft.hpp"

#include <cmath>
#include <numbers>

namespace emgtl::dft {

std::vector<std::complex<double>> real_forward(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // reduce k*t mod n first so the angle stays small and exact
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      re += x[t] * std::cos(angle);
      im += x[t] * std::sin(angle);
    }
    out[k] = {re, im};
  }
  return out;
}

std::vector<double> real_inverse(std::span<const std::complex<double>> bins, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < bins.size(); ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      const double term = bins[k].real() * std::cos(angle) - bins[k].imag() * std::sin(angle);
      acc += bin_weight(k, n) == 1.0 ? bins[k].real() * std::cos(angle) : 2.0 * term;
    }
    out[t] = acc / static_cast<double>(n);
  }
  return out;
}

double bin_weight(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (n % 2 == 0 && k == n / 2) return 1.0;
  return 2.0;
}

}  // namespace emgtl::dft
