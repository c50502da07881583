#pragma once

#include <complex>
#include <span>
#include <vector>

namespace emgtl::dft {

/// Non-negative frequency half of the DFT of a real signal: n/2 + 1 bins.
/// Direct O(n^2) evaluation; the transform sizes used here are 28 and 52.
std::vector<std::complex<double>> real_forward(std::span<const double> x);

/// Inverse of real_forward for an output of length n (Hermitian symmetry is
/// implied; imaginary parts of the DC and Nyquist bins are ignored).
std::vector<double> real_inverse(std::span<const std::complex<double>> bins, std::size_t n);

/// Weight of each half-spectrum bin in the two-sided power sum: 1 for DC and
/// (even n) Nyquist, 2 otherwise.
double bin_weight(std::size_t k, std::size_t n);

}  // namespace emgtl::dft
