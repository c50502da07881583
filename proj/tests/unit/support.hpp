#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the library code they check.

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "emgtl/dataset.hpp"
#include "emgtl/nn/network.hpp"

namespace emgtl::testing {

Window random_window(std::mt19937_64& rng, double amplitude = 60.0, bool integer_valued = true);
std::vector<Window> random_windows(std::size_t n, std::uint64_t seed, double amplitude = 60.0);
std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0);
EmgRecording recording_of_length(std::size_t length, int gesture = 0, int subject = 0, std::uint64_t seed = 0);

// ---- signal processing oracles ---------------------------------------------

/// X[k] = sum_n x[n] exp(-2 pi i k n / N), all N bins, long double sums.
std::vector<std::complex<double>> naive_dft(std::span<const double> x);
/// psi(t) for the Mexican hat, written from the closed form.
double ricker(double t);
/// (1 / sqrt(a)) sum_k x[k] psi((k - b) / a), zero outside the signal.
double naive_cwt(std::span<const double> x, double a, double b);
/// |DFT|^2 of a Hann(periodic)-weighted frame.
std::vector<double> naive_frame_power(std::span<const double> frame);

/// Half-sample symmetric extension by `pad` on both sides.
std::vector<double> symmetric_pad(std::span<const double> x, std::size_t pad);
/// Full linear convolution.
std::vector<double> full_convolution(std::span<const double> x, std::span<const double> h);
/// One db7 analysis level via pad + full convolution + keep odd samples.
void dwt_level_by_convolution(std::span<const double> x, std::span<const double> lo, std::span<const double> hi,
                              std::vector<double>& approx, std::vector<double>& detail);
/// Algorithm 1 over a given coefficient vector.
std::vector<double> mdwt_algorithm1(const std::vector<double>& coefficients);

// ---- feature oracles -------------------------------------------------------

double o_mav(std::span<const double> x);
double o_zc(std::span<const double> x, double eps);
double o_ssc(std::span<const double> x, double eps);
double o_wl(std::span<const double> x);
double o_skewness(std::span<const double> x);
double o_rms(std::span<const double> x);
double o_iemg(std::span<const double> x);
/// Yule-Walker normal equations solved directly (dense LU).
std::vector<double> o_ar(std::span<const double> x, std::size_t order);
std::array<double, 3> o_hjorth(std::span<const double> x);
/// Every ordered pair i != j counted, then halved.
double o_sampen(std::span<const double> x, std::size_t m, double r_coeff, bool* degenerate = nullptr);
std::vector<double> o_hist(std::span<const double> x, std::size_t bins, double threshold);
/// Cepstrum of 1 / (1 + sum a_k z^-k) from the log spectrum on a dense grid;
/// valid when sum |a_k| < 1.
std::vector<double> o_cepstral_spectral(std::span<const double> a, std::size_t order, std::size_t grid = 8192);

// ---- statistics oracles ----------------------------------------------------

/// Upper-tail p of W+ by listing all 2^n sign assignments of `ranks`.
double enumerate_wilcoxon_p(const std::vector<double>& ranks, double w_plus);

// ---- nn helpers ------------------------------------------------------------

struct GradCheck {
  double max_relative_error = 0.0;
  std::string worst;  // tensor with the largest error
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to every parameter (all
/// coordinates up to `max_coords` per tensor, evenly spread) and to the input,
/// compared by norm-relative error per tensor (denominator floored at 1e-3).
/// `loss` must be deterministic.
GradCheck gradient_check(nn::Model& model, const nn::Tensor& x, const std::vector<int>& labels, int subject,
                         std::size_t max_coords = 40, double h = 1e-6);

/// Same check for a single layer under the linear loss sum(r * y).
GradCheck layer_gradient_check(nn::Layer& layer, const nn::Tensor& x, std::uint64_t seed, double h = 1e-6,
                               nn::Mode mode = nn::Mode::Train);

}  // namespace emgtl::testing
