#include "support.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace emgtl::testing {

Window random_window(std::mt19937_64& rng, double amplitude, bool integer_valued) {
  std::normal_distribution<double> d(0.0, amplitude / 3.0);
  Window w;
  for (auto& v : w.data) {
    double x = std::clamp(d(rng), -128.0, 127.0);
    v = integer_valued ? std::round(x) : x;
  }
  return w;
}

std::vector<Window> random_windows(std::size_t n, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_window(rng, amplitude));
  return out;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

EmgRecording recording_of_length(std::size_t length, int gesture, int subject, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-50, 50);
  EmgRecording r;
  r.gesture = gesture;
  r.subject_id = subject;
  for (auto& ch : r.samples) {
    ch.resize(length);
    for (auto& v : ch) v = d(rng);
  }
  return r;
}

// ---- signal processing -----------------------------------------------------

std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * t) % n) /
                              static_cast<long double>(n);
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

double ricker(double t) {
  const double a = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
  return a * (1.0 - t * t) * std::exp(-t * t / 2.0);
}

double naive_cwt(std::span<const double> x, double a, double b) {
  long double acc = 0.0L;
  for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * ricker((static_cast<double>(k) - b) / a);
  return static_cast<double>(acc / std::sqrt(static_cast<long double>(a)));
}

std::vector<double> naive_frame_power(std::span<const double> frame) {
  const std::size_t n = frame.size();
  std::vector<double> weighted(n);
  for (std::size_t i = 0; i < n; ++i)
    weighted[i] = frame[i] * std::pow(std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)), 2);
  const auto bins = naive_dft(weighted);
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(bins[k]);
  return p;
}

std::vector<double> symmetric_pad(std::span<const double> x, std::size_t pad) {
  // x = [a b c], pad 2 -> [b a | a b c | c b]
  std::vector<double> out;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(pad); i < n + static_cast<std::ptrdiff_t>(pad); ++i) {
    std::ptrdiff_t j = i;
    while (j < 0 || j >= n) j = j < 0 ? -j - 1 : 2 * n - j - 1;
    out.push_back(x[static_cast<std::size_t>(j)]);
  }
  return out;
}

std::vector<double> full_convolution(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
  return y;
}

void dwt_level_by_convolution(std::span<const double> x, std::span<const double> lo, std::span<const double> hi,
                              std::vector<double>& approx, std::vector<double>& detail) {
  const std::size_t f = lo.size();
  const auto ext = symmetric_pad(x, f - 1);
  const auto ylo = full_convolution(ext, lo);
  const auto yhi = full_convolution(ext, hi);
  const std::size_t out_len = (x.size() + f - 1) / 2;
  approx.clear();
  detail.clear();
  // keep positions f, f+2, ... of the full convolution (odd phase of the
  // valid part)
  for (std::size_t o = 0; o < out_len; ++o) {
    approx.push_back(ylo[f + 2 * o]);
    detail.push_back(yhi[f + 2 * o]);
  }
}

std::vector<double> mdwt_algorithm1(const std::vector<double>& coefficients) {
  const double N = static_cast<double>(coefficients.size());
  const int SMax = static_cast<int>(std::log2(N));
  std::vector<double> Mxk;
  for (int s = 1; s <= SMax; ++s) {
    const double CMax = N / std::pow(2.0, s) - 1.0;  // may be fractional; u runs over integers <= CMax
    double val = 0.0;
    for (int u = 0; u <= CMax; ++u) val += std::fabs(coefficients[static_cast<std::size_t>(u)]);
    Mxk.push_back(val);
  }
  return Mxk;
}

// ---- features --------------------------------------------------------------

namespace {
long double mean_ld(std::span<const double> x) {
  long double s = 0.0L;
  for (double v : x) s += v;
  return s / static_cast<long double>(x.size());
}
long double pvar_ld(std::span<const double> x) {
  const long double m = mean_ld(x);
  long double s = 0.0L;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<long double>(x.size());
}
}  // namespace

double o_mav(std::span<const double> x) {
  long double s = 0.0L;
  for (double v : x) s += std::fabs(v);
  return static_cast<double>(s / static_cast<long double>(x.size()));
}

double o_zc(std::span<const double> x, double eps) {
  int n = 0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const bool pa = !(x[k - 1] < 0.0), pb = !(x[k] < 0.0);
    if (pa != pb && std::fabs(x[k - 1] - x[k]) >= eps) ++n;
  }
  return n;
}

double o_ssc(std::span<const double> x, double eps) {
  int n = 0;
  for (std::size_t k = 1; k + 1 < x.size(); ++k) {
    const double left = x[k] - x[k - 1];
    const double right = x[k] - x[k + 1];
    if (left * right >= eps && left * right > 0.0) ++n;  // flat runs are not turns
  }
  return n;
}

double o_wl(std::span<const double> x) {
  long double s = 0.0L;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) s += std::fabs(x[k + 1] - x[k]);
  return static_cast<double>(s);
}

double o_skewness(std::span<const double> x) {
  const long double m = mean_ld(x);
  const long double var = pvar_ld(x);
  if (var == 0.0L) return 0.0;
  long double m3 = 0.0L;
  for (double v : x) m3 += (v - m) * (v - m) * (v - m);
  m3 /= static_cast<long double>(x.size());
  return static_cast<double>(m3 / std::pow(var, 1.5L));
}

double o_rms(std::span<const double> x) {
  long double s = 0.0L;
  for (double v : x) s += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(s / static_cast<long double>(x.size())));
}

double o_iemg(std::span<const double> x) {
  long double s = 0.0L;
  for (double v : x) s += std::fabs(v);
  return static_cast<double>(s);
}

std::vector<double> o_ar(std::span<const double> x, std::size_t order) {
  const std::size_t n = x.size();
  auto r = [&](std::size_t lag) {
    long double s = 0.0L;
    for (std::size_t t = 0; t + lag < n; ++t) s += static_cast<long double>(x[t]) * x[t + lag];
    return static_cast<double>(s / static_cast<long double>(n));
  };
  if (r(0) == 0.0) return std::vector<double>(order, 0.0);
  Eigen::MatrixXd R(order, order);
  Eigen::VectorXd rhs(order);
  for (std::size_t i = 0; i < order; ++i) {
    rhs(static_cast<Eigen::Index>(i)) = r(i + 1);
    for (std::size_t j = 0; j < order; ++j)
      R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r(i > j ? i - j : j - i);
  }
  const Eigen::VectorXd a = R.fullPivLu().solve(rhs);
  return {a.data(), a.data() + a.size()};
}

std::array<double, 3> o_hjorth(std::span<const double> x) {
  std::vector<double> d1, d2;
  for (std::size_t k = 1; k < x.size(); ++k) d1.push_back(x[k] - x[k - 1]);
  for (std::size_t k = 1; k < d1.size(); ++k) d2.push_back(d1[k] - d1[k - 1]);
  const long double v0 = pvar_ld(x), v1 = pvar_ld(d1), v2 = pvar_ld(d2);
  if (v0 == 0.0L) return {0.0, 0.0, 0.0};
  const long double mob = std::sqrt(v1 / v0);
  if (v1 == 0.0L) return {static_cast<double>(v0), static_cast<double>(mob), 0.0};
  const long double comp = std::sqrt(v2 / v1) / mob;
  return {static_cast<double>(v0), static_cast<double>(mob), static_cast<double>(comp)};
}

double o_sampen(std::span<const double> x, std::size_t m, double r_coeff, bool* degenerate) {
  const std::size_t n = x.size();
  const double r = r_coeff * static_cast<double>(std::sqrt(pvar_ld(x)));
  const std::size_t count = n - m;  // templates considered at both lengths
  auto close = [&](std::size_t i, std::size_t j, std::size_t len) {
    double dist = 0.0;
    for (std::size_t k = 0; k < len; ++k) dist = std::max(dist, std::fabs(x[i + k] - x[j + k]));
    return dist <= r;
  };
  std::size_t A = 0, B = 0;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < count; ++j) {
      if (i == j) continue;
      if (close(i, j, m)) ++B;
      if (close(i, j, m + 1)) ++A;
    }
  A /= 2;
  B /= 2;
  if (degenerate) *degenerate = A == 0 || B == 0 || r == 0.0;
  if (A == 0 || B == 0) return std::log(0.5 * static_cast<double>(count) * static_cast<double>(count - 1));
  return -std::log(static_cast<double>(A) / static_cast<double>(B));
}

std::vector<double> o_hist(std::span<const double> x, std::size_t bins, double threshold) {
  std::vector<double> counts(bins, 0.0);
  const double mu = static_cast<double>(mean_ld(x));
  const double sigma = static_cast<double>(std::sqrt(pvar_ld(x)));
  if (sigma == 0.0) {
    counts[bins / 2] = static_cast<double>(x.size());
    return counts;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    edges[i] = mu + (static_cast<double>(i) - static_cast<double>(bins) / 2.0) * (2.0 * threshold * sigma / static_cast<double>(bins));
  for (double v : x) {
    std::size_t b = 0;
    while (b + 1 < bins && v >= edges[b + 1]) ++b;
    counts[b] += 1.0;
  }
  return counts;
}

std::vector<double> o_cepstral_spectral(std::span<const double> a, std::size_t order, std::size_t grid) {
  std::vector<std::complex<double>> logh(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid);
    std::complex<double> A = 1.0;
    for (std::size_t j = 0; j < a.size(); ++j) A += a[j] * std::exp(std::complex<double>(0.0, -w * static_cast<double>(j + 1)));
    logh[k] = -std::log(A);
  }
  std::vector<double> c(order);
  for (std::size_t n = 1; n <= order; ++n) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k < grid; ++k) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid);
      acc += logh[k] * std::exp(std::complex<double>(0.0, w * static_cast<double>(n)));
    }
    c[n - 1] = acc.real() / static_cast<double>(grid);
  }
  return c;
}

// ---- statistics ------------------------------------------------------------

double enumerate_wilcoxon_p(const std::vector<double>& ranks, double w_plus) {
  const std::size_t n = ranks.size();
  std::size_t hits = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i)) w += ranks[i];
    if (w >= w_plus - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---- nn --------------------------------------------------------------------

namespace {

double cross_entropy(const nn::Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    long double s = 0.0L;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(static_cast<long double>(logits[i * c + j] - mx));
    total += -(logits[i * c + static_cast<std::size_t>(labels[i])] - mx) + std::log(s);
  }
  return static_cast<double>(total / static_cast<long double>(n));
}

nn::Tensor softmax_grad(const nn::Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  nn::Tensor g(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(logits[i * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits[i * c + j] - mx) / s;
      g[i * c + j] = (p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  return g;
}

std::vector<std::size_t> spread(std::size_t size, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (size <= max_coords) {
    idx.resize(size);
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    for (std::size_t i = 0; i < max_coords; ++i) idx.push_back(i * size / max_coords);
  }
  return idx;
}

double norm_relative(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  // floored for zero-gradient tensors, e.g. biases ahead of a batch-norm
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-3);
}

void record(GradCheck& out, const std::string& name, const std::vector<double>& analytic,
            const std::vector<double>& numeric) {
  const double e = norm_relative(analytic, numeric);
  out.checked += analytic.size();
  if (e > out.max_relative_error || out.worst.empty()) {
    if (e >= out.max_relative_error) {
      out.max_relative_error = e;
      out.worst = name;
    }
  }
}

}  // namespace

GradCheck gradient_check(nn::Model& model, const nn::Tensor& x, const std::vector<int>& labels, int subject,
                         std::size_t max_coords, double h) {
  auto loss_at = [&](const nn::Tensor& input) {
    std::mt19937_64 rng(1234);
    nn::ForwardContext ctx{nn::Mode::Train, subject, &rng, nullptr};
    return cross_entropy(model.forward(input, ctx), labels);
  };
  model.zero_grad();
  std::mt19937_64 rng(1234);
  nn::ForwardContext ctx{nn::Mode::Train, subject, &rng, nullptr};
  const nn::Tensor logits = model.forward(x, ctx);
  const nn::Tensor gx = model.backward(softmax_grad(logits, labels));

  GradCheck out;
  for (nn::Parameter* p : model.parameters()) {
    if (p->frozen) continue;
    std::vector<double> analytic, numeric;
    for (std::size_t i : spread(p->value.size(), max_coords)) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss_at(x);
      p->value[i] = keep - h;
      const double lm = loss_at(x);
      p->value[i] = keep;
      analytic.push_back(p->grad[i]);
      numeric.push_back((lp - lm) / (2.0 * h));
    }
    record(out, p->name, analytic, numeric);
  }
  std::vector<double> analytic, numeric;
  nn::Tensor xp = x;
  for (std::size_t i : spread(x.size(), max_coords)) {
    const double keep = xp[i];
    xp[i] = keep + h;
    const double lp = loss_at(xp);
    xp[i] = keep - h;
    const double lm = loss_at(xp);
    xp[i] = keep;
    analytic.push_back(gx[i]);
    numeric.push_back((lp - lm) / (2.0 * h));
  }
  record(out, "input", analytic, numeric);
  return out;
}

GradCheck layer_gradient_check(nn::Layer& layer, const nn::Tensor& x, std::uint64_t seed, double h, nn::Mode mode) {
  std::mt19937_64 rng(seed);
  nn::ForwardContext probe{mode, 0, &rng, nullptr};
  const nn::Tensor y0 = layer.forward(x, probe);
  const auto r = random_vector(y0.size(), rng);
  auto loss_at = [&](const nn::Tensor& input) {
    std::mt19937_64 drop(seed + 1);
    nn::ForwardContext ctx{mode, 0, &drop, nullptr};
    const nn::Tensor y = layer.forward(input, ctx);
    long double s = 0.0L;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return static_cast<double>(s);
  };
  for (nn::Parameter* p : layer.parameters()) p->grad.fill(0.0);
  std::mt19937_64 drop(seed + 1);
  nn::ForwardContext ctx{mode, 0, &drop, nullptr};
  const nn::Tensor y = layer.forward(x, ctx);
  const nn::Tensor gx = layer.backward(nn::Tensor(y.shape(), r));

  GradCheck out;
  for (nn::Parameter* p : layer.parameters()) {
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss_at(x);
      p->value[i] = keep - h;
      const double lm = loss_at(x);
      p->value[i] = keep;
      analytic.push_back(p->grad[i]);
      numeric.push_back((lp - lm) / (2.0 * h));
    }
    record(out, std::string(layer.kind()) + "." + p->name, analytic, numeric);
  }
  std::vector<double> analytic, numeric;
  nn::Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = xp[i];
    xp[i] = keep + h;
    const double lp = loss_at(xp);
    xp[i] = keep - h;
    const double lm = loss_at(xp);
    xp[i] = keep;
    analytic.push_back(gx[i]);
    numeric.push_back((lp - lm) / (2.0 * h));
  }
  record(out, std::string(layer.kind()) + ".input", analytic, numeric);
  return out;
}

}  // namespace emgtl::testing
