#include "emgtl/timefreq.hpp"

#include <cmath>
#include <numbers>

#include "emgtl/dft.hpp"
#include "emgtl/errors.hpp"

namespace emgtl {

namespace {

void require_window_length(std::span<const double> signal, const char* what) {
  if (signal.size() != kWindowLength)
    throw DataError(std::string(what) + ": expected 52 samples, got " + std::to_string(signal.size()));
}

}  // namespace

// ---- STFT ------------------------------------------------------------------

const std::array<double, kStftWindow>& hann_window() {
  static const std::array<double, kStftWindow> w = [] {
    std::array<double, kStftWindow> out{};
    for (std::size_t n = 0; n < kStftWindow; ++n)
      out[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kStftWindow);
    return out;
  }();
  return w;
}

RealMatrix spectrogram_channel(std::span<const double> signal) {
  require_window_length(signal, "spectrogram_channel");
  const auto& hann = hann_window();
  RealMatrix out(kStftFrames, kStftBins);
  std::array<double, kStftWindow> frame{};
  for (std::size_t f = 0; f < kStftFrames; ++f) {
    for (std::size_t n = 0; n < kStftWindow; ++n) frame[n] = hann[n] * signal[f * kStftHop + n];
    const auto bins = dft::real_forward(frame);
    for (std::size_t k = 0; k < kStftBins; ++k) out(f, k) = std::norm(bins[k]);
  }
  return out;
}

SpectroTensor spectrogram_example(const Window& w) {
  SpectroTensor out;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const RealMatrix s = spectrogram_channel(w.channel(c));
    for (std::size_t t = 0; t < SpectroTensor::kTime; ++t)
      for (std::size_t f = 0; f < SpectroTensor::kFreq; ++f) out.at(t, c, f) = s(t, f + 1);
  }
  return out;
}

// ---- CWT -------------------------------------------------------------------

double mexican_hat(double t) {
  static const double norm = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
  const double t2 = t * t;
  return norm * (1.0 - t2) * std::exp(-0.5 * t2);
}

namespace {

// kernel(a, d) = psi(d / a) / sqrt(a) for d in [-51, 51]
struct WaveletTable {
  static constexpr std::size_t kSpan = 2 * kWindowLength - 1;
  std::vector<double> values;  // kCwtScales x kSpan
  WaveletTable() : values(kCwtScales * kSpan) {
    for (std::size_t a = 1; a <= kCwtScales; ++a) {
      const double scale = static_cast<double>(a);
      for (std::size_t i = 0; i < kSpan; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(kWindowLength - 1);
        values[(a - 1) * kSpan + i] = mexican_hat(d / scale) / std::sqrt(scale);
      }
    }
  }
  double operator()(std::size_t scale, std::ptrdiff_t delta) const {
    return values[(scale - 1) * kSpan + static_cast<std::size_t>(delta + static_cast<std::ptrdiff_t>(kWindowLength) - 1)];
  }
};

const WaveletTable& wavelet_table() {
  static const WaveletTable table;
  return table;
}

double cwt_coefficient(std::span<const double> x, std::size_t scale, std::size_t position) {
  const auto& table = wavelet_table();
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k)
    acc += x[k] * table(scale, static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(position));
  return acc;
}

}  // namespace

RealMatrix cwt_channel(std::span<const double> signal, std::size_t scales) {
  require_window_length(signal, "cwt_channel");
  if (scales == 0 || scales > kCwtScales) throw ConfigError("cwt_channel supports 1..32 scales");
  RealMatrix out(scales, kWindowLength);
  for (std::size_t a = 1; a <= scales; ++a)
    for (std::size_t n = 0; n < kWindowLength; ++n) out(a - 1, n) = cwt_coefficient(signal, a, n);
  return out;
}

RealMatrix downsample_nearest(const RealMatrix& m, std::size_t factor) {
  if (factor == 0) throw ConfigError("downsample factor must be >= 1");
  const std::size_t rows = (m.rows + factor - 1) / factor;
  const std::size_t cols = (m.cols + factor - 1) / factor;
  RealMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = m(r * factor, c * factor);
  return out;
}

CwtTensor cwt_example(const Window& w) {
  CwtTensor out;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto x = w.channel(c);
    for (std::size_t s = 0; s < CwtTensor::kScale; ++s) {
      const std::size_t scale = s * kCwtDownsample + 1;
      for (std::size_t t = 0; t < CwtTensor::kTime; ++t)
        out.at(t, c, s) = cwt_coefficient(x, scale, t * kCwtDownsample);
    }
  }
  return out;
}

// ---- DWT -------------------------------------------------------------------

const Db7Filters& db7_filters() {
  static const Db7Filters filters = [] {
    Db7Filters f{};
    f.dec_lo = {0.00035371379997452024845, -0.0018016407040474909153, 0.00042957797292136652113,
                0.012550998556099840613,   -0.016574541630666880654,  -0.03802993693501441358,
                0.080612609151083071913,   0.071309219266830264751,   -0.22403618499387498264,
                -0.14390600392856497541,   0.46978228740519312247,    0.72913209084623511992,
                0.39653931948191730654,    0.07785205408500917902};
    constexpr std::size_t n = 14;
    for (std::size_t k = 0; k < n; ++k) {
      f.rec_lo[k] = f.dec_lo[n - 1 - k];
      f.rec_hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * f.dec_lo[k];
    }
    for (std::size_t k = 0; k < n; ++k) f.dec_hi[k] = f.rec_hi[n - 1 - k];
    return f;
  }();
  return filters;
}

namespace {

double symmetric_at(std::span<const double> x, std::ptrdiff_t idx) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t period = 2 * n;
  std::ptrdiff_t m = idx % period;
  if (m < 0) m += period;
  return m < n ? x[static_cast<std::size_t>(m)] : x[static_cast<std::size_t>(period - 1 - m)];
}

}  // namespace

void dwt_step(std::span<const double> x, std::vector<double>& approx, std::vector<double>& detail) {
  const auto& f = db7_filters();
  constexpr std::size_t taps = 14;
  const std::size_t out_len = (x.size() + taps - 1) / 2;
  approx.assign(out_len, 0.0);
  detail.assign(out_len, 0.0);
  for (std::size_t o = 0; o < out_len; ++o) {
    const auto i = static_cast<std::ptrdiff_t>(2 * o + 1);
    double a = 0.0, d = 0.0;
    for (std::size_t j = 0; j < taps; ++j) {
      const double v = symmetric_at(x, i - static_cast<std::ptrdiff_t>(j));
      a += f.dec_lo[j] * v;
      d += f.dec_hi[j] * v;
    }
    approx[o] = a;
    detail[o] = d;
  }
}

std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> detail) {
  if (approx.size() != detail.size()) throw DataError("idwt_step: coefficient lengths differ");
  const auto& f = db7_filters();
  constexpr std::size_t half = 7;
  const std::size_t n = approx.size();
  if (n < half) throw DataError("idwt_step: too few coefficients");
  std::vector<double> out(2 * n - 2 * half + 2, 0.0);
  for (std::size_t i = half - 1, o = 0; i < n; ++i, o += 2) {
    double even = 0.0, odd = 0.0;
    for (std::size_t j = 0; j < half; ++j) {
      even += f.rec_lo[2 * j] * approx[i - j] + f.rec_hi[2 * j] * detail[i - j];
      odd += f.rec_lo[2 * j + 1] * approx[i - j] + f.rec_hi[2 * j + 1] * detail[i - j];
    }
    out[o] = even;
    out[o + 1] = odd;
  }
  return out;
}

WaveletDecomposition dwt_db7(std::span<const double> signal, int level) {
  if (signal.empty()) throw DataError("dwt_db7: empty signal");
  if (level < 1) throw ConfigError("dwt_db7: level must be >= 1");
  WaveletDecomposition dec;
  dec.signal_length = signal.size();
  dec.level = level;
  std::vector<double> current(signal.begin(), signal.end());
  std::vector<std::vector<double>> details;  // CD1, CD2, ...
  for (int l = 0; l < level; ++l) {
    std::vector<double> a, d;
    dwt_step(current, a, d);
    details.push_back(std::move(d));
    current = std::move(a);
  }
  dec.coefficients = current;
  dec.lengths.push_back(current.size());
  for (auto it = details.rbegin(); it != details.rend(); ++it) {
    dec.coefficients.insert(dec.coefficients.end(), it->begin(), it->end());
    dec.lengths.push_back(it->size());
  }
  return dec;
}

std::vector<double> idwt_db7(const WaveletDecomposition& dec) {
  std::size_t pos = 0;
  std::vector<double> approx(dec.coefficients.begin(), dec.coefficients.begin() + static_cast<std::ptrdiff_t>(dec.lengths[0]));
  pos += dec.lengths[0];
  for (std::size_t l = 1; l < dec.lengths.size(); ++l) {
    std::span<const double> detail(dec.coefficients.data() + pos, dec.lengths[l]);
    pos += dec.lengths[l];
    // an approximation one longer than its detail is trimmed, as in wavedec/waverec
    if (approx.size() == detail.size() + 1) approx.pop_back();
    approx = idwt_step(approx, detail);
  }
  if (approx.size() > dec.signal_length) approx.resize(dec.signal_length);
  return approx;
}

std::vector<double> mdwt(std::span<const double> signal) {
  require_window_length(signal, "mdwt");
  const WaveletDecomposition dec = dwt_db7(signal, 3);
  const std::size_t n = dec.coefficients.size();
  const auto smax = static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n))));
  std::vector<double> out;
  out.reserve(smax);
  for (std::size_t s = 1; s <= smax; ++s) {
    const std::size_t count = n >> s;  // CMax + 1
    double val = 0.0;
    for (std::size_t u = 0; u < count; ++u) val += std::abs(dec.coefficients[u]);
    out.push_back(val);
  }
  return out;
}

std::size_t mdwt_length() {
  static const std::size_t n = [] {
    const std::array<double, kWindowLength> zeros{};
    return mdwt(zeros).size();
  }();
  return n;
}

// ---- batch -----------------------------------------------------------------

std::vector<SpectroTensor> spectrogram_batch(std::span<const Window> windows, Backend backend) {
  std::vector<SpectroTensor> out(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  if (backend == Backend::Serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = spectrogram_example(windows[i]);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = spectrogram_example(windows[i]);
  }
  return out;
}

std::vector<CwtTensor> cwt_batch(std::span<const Window> windows, Backend backend) {
  wavelet_table();  // build the table before entering the parallel region
  std::vector<CwtTensor> out(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  if (backend == Backend::Serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = cwt_example(windows[i]);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = cwt_example(windows[i]);
  }
  return out;
}

}  // namespace emgtl
