#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "emgtl/dataset.hpp"
#include "emgtl/parallel.hpp"

namespace emgtl {

inline constexpr std::size_t kStftWindow = 28;
inline constexpr std::size_t kStftHop = 8;  // 28-sample frames overlapping by 20
inline constexpr std::size_t kStftFrames = 4;
inline constexpr std::size_t kStftBins = kStftWindow / 2 + 1;  // 15
inline constexpr std::size_t kCwtScales = 32;
inline constexpr std::size_t kCwtDownsample = 4;

/// Dense row-major matrix of doubles.
struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Time x Channel x Frequency = 4 x 8 x 14 squared STFT magnitudes.
struct SpectroTensor {
  static constexpr std::size_t kTime = 4, kChannel = kChannels, kFreq = 14;
  std::array<double, kTime * kChannel * kFreq> data{};
  double& at(std::size_t t, std::size_t c, std::size_t f) { return data[(t * kChannel + c) * kFreq + f]; }
  double at(std::size_t t, std::size_t c, std::size_t f) const { return data[(t * kChannel + c) * kFreq + f]; }
};

/// Time x Channel x Scale = 12 x 8 x 7 Mexican Hat CWT, downsampled.
struct CwtTensor {
  static constexpr std::size_t kTime = 12, kChannel = kChannels, kScale = 7;
  std::array<double, kTime * kChannel * kScale> data{};
  double& at(std::size_t t, std::size_t c, std::size_t s) { return data[(t * kChannel + c) * kScale + s]; }
  double at(std::size_t t, std::size_t c, std::size_t s) const { return data[(t * kChannel + c) * kScale + s]; }
};

// ---- STFT ------------------------------------------------------------------

/// Periodic Hann window of length 28.
const std::array<double, kStftWindow>& hann_window();

/// 4 frames (offsets 0, 8, 16, 24) x 15 bins of |FFT(hann * frame)|^2.
RealMatrix spectrogram_channel(std::span<const double> signal);

/// Per-channel spectrogram with the DC bin dropped.
SpectroTensor spectrogram_example(const Window& w);

// ---- CWT -------------------------------------------------------------------

/// psi(t) = 2 / (sqrt(3) pi^(1/4)) (1 - t^2) exp(-t^2 / 2)
double mexican_hat(double t);

/// Row a-1 holds scale a = 1..scales; same-length output, zero padding,
/// 1/sqrt(a) normalisation.
RealMatrix cwt_channel(std::span<const double> signal, std::size_t scales = kCwtScales);

/// Order-0 downsampling: keeps rows and columns 0, factor, 2*factor, ...
RealMatrix downsample_nearest(const RealMatrix& m, std::size_t factor);

/// 32x52 CWT -> 8x13 -> drop last scale and last time column -> 12 x 8 x 7.
/// Only the retained coefficients are evaluated.
CwtTensor cwt_example(const Window& w);

// ---- DWT / mDWT ------------------------------------------------------------

/// Daubechies-7 analysis and synthesis filters (14 taps each).
struct Db7Filters {
  std::array<double, 14> dec_lo, dec_hi, rec_lo, rec_hi;
};
const Db7Filters& db7_filters();

/// Multilevel decomposition flattened as [CA_n, CD_n, ..., CD_1].
struct WaveletDecomposition {
  std::vector<double> coefficients;
  std::vector<std::size_t> lengths;  // lengths of CA_n, CD_n, ..., CD_1
  std::size_t signal_length = 0;
  int level = 3;
};

/// One analysis step with half-sample symmetric extension; writes
/// floor((n + 13) / 2) approximation and detail coefficients.
void dwt_step(std::span<const double> x, std::vector<double>& approx, std::vector<double>& detail);

/// One synthesis step producing 2 * len - 12 samples.
std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> detail);

WaveletDecomposition dwt_db7(std::span<const double> signal, int level = 3);
std::vector<double> idwt_db7(const WaveletDecomposition& dec);

/// Marginal DWT: for s = 1..floor(log2(N)), sum of |c[u]| for u < N / 2^s
/// over the flattened level-3 db7 coefficients. Input length must be 52.
std::vector<double> mdwt(std::span<const double> signal);

/// Number of mDWT outputs for a 52-sample window.
std::size_t mdwt_length();

// ---- batch transforms ------------------------------------------------------

std::vector<SpectroTensor> spectrogram_batch(std::span<const Window> windows,
                                             Backend backend = default_backend());
std::vector<CwtTensor> cwt_batch(std::span<const Window> windows, Backend backend = default_backend());

}  // namespace emgtl
