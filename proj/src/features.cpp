#include "emgtl/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emgtl/errors.hpp"
#include "emgtl/timefreq.hpp"

namespace emgtl {

void FeatureConfig::validate() const {
  if (epsilon_zc < 0.0 || epsilon_ssc < 0.0) throw ConfigError("feature thresholds must be non-negative");
  if (ar_order < 1 || cepstral_order < 1) throw ConfigError("AR/cepstral order must be >= 1");
  if (hist_bins < 1) throw ConfigError("histogram needs at least one bin");
  if (hist_threshold <= 0.0 || sampen_r_coeff < 0.0) throw ConfigError("invalid histogram/SampEn threshold");
}

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// population variance
double variance_of(std::span<const double> x) {
  const double m = mean_of(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(x.size());
}

std::vector<double> first_difference(std::span<const double> x) {
  std::vector<double> d(x.size() - 1);
  for (std::size_t k = 1; k < x.size(); ++k) d[k - 1] = x[k] - x[k - 1];
  return d;
}

}  // namespace

double mav(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += std::abs(v);
  return acc / static_cast<double>(x.size());
}

std::size_t ssc(std::span<const double> x, double epsilon) {
  if (x.size() < 3) throw DataError("SSC needs at least 3 samples");
  std::size_t count = 0;
  for (std::size_t k = 1; k + 1 < x.size(); ++k) {
    const double turn = (x[k] - x[k - 1]) * (x[k] - x[k + 1]);
    if (turn >= epsilon && turn > 0.0) ++count;
  }
  return count;
}

std::size_t zc(std::span<const double> x, double epsilon) {
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const bool same_sign = (x[k] >= 0.0) == (x[k + 1] >= 0.0);
    if (std::abs(x[k] - x[k + 1]) >= epsilon && !same_sign) ++count;
  }
  return count;
}

double wl(std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) acc += std::abs(x[k] - x[k - 1]);
  return acc;
}

FeatureValue skewness(std::span<const double> x) {
  const double sigma = std::sqrt(variance_of(x));
  if (sigma == 0.0) return {0.0, true};
  const double m = mean_of(x);
  double acc = 0.0;
  for (double v : x) {
    const double z = (v - m) / sigma;
    acc += z * z * z;
  }
  return {acc / static_cast<double>(x.size()), false};
}

double rms(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double iemg(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += std::abs(v);
  return acc;
}

Hjorth hjorth(std::span<const double> x) {
  if (x.size() < 3) throw DataError("Hjorth parameters need at least 3 samples");
  Hjorth h;
  h.activity = variance_of(x);
  if (h.activity == 0.0) {
    h.degenerate = true;
    return h;
  }
  const auto d1 = first_difference(x);
  const auto d2 = first_difference(d1);
  const double act1 = variance_of(d1);
  h.mobility = std::sqrt(act1 / h.activity);
  if (act1 == 0.0) {
    h.degenerate = true;
    return h;
  }
  const double mobility1 = std::sqrt(variance_of(d2) / act1);
  h.complexity = mobility1 / h.mobility;
  return h;
}

std::vector<double> levinson_durbin(std::span<const double> r, std::size_t order) {
  if (r.size() < order + 1) throw DataError("levinson_durbin: autocorrelation too short");
  std::vector<double> a(order, 0.0), prev(order, 0.0);
  double error = r[0];
  for (std::size_t i = 0; i < order; ++i) {
    if (error <= 0.0) break;  // perfectly predicted; higher orders stay zero
    double acc = r[i + 1];
    for (std::size_t j = 0; j < i; ++j) acc -= a[j] * r[i - j];
    const double k = acc / error;
    prev = a;
    a[i] = k;
    for (std::size_t j = 0; j < i; ++j) a[j] = prev[j] - k * prev[i - 1 - j];
    error *= (1.0 - k * k);
  }
  return a;
}

FeatureVectorValue ar_coefficients(std::span<const double> x, std::size_t order) {
  if (order < 1) throw ConfigError("AR order must be >= 1");
  if (x.size() <= order) throw DataError("AR order must be smaller than the signal length");
  std::vector<double> r(order + 1, 0.0);
  for (std::size_t lag = 0; lag <= order; ++lag) {
    for (std::size_t t = lag; t < x.size(); ++t) r[lag] += x[t] * x[t - lag];
    r[lag] /= static_cast<double>(x.size());
  }
  if (r[0] == 0.0) return {std::vector<double>(order, 0.0), true};
  return {levinson_durbin(r, order), false};
}

FeatureValue sampen(std::span<const double> x, std::size_t m, double r_coeff, std::optional<double> cap) {
  const std::size_t n = x.size();
  if (n <= m + 1) throw DataError("SampEn needs more than m + 1 samples");
  const double sigma = std::sqrt(variance_of(x));
  const double r = r_coeff * sigma;
  const std::size_t templates = n - m;
  std::size_t b = 0, a = 0;
  for (std::size_t i = 0; i < templates; ++i) {
    for (std::size_t j = i + 1; j < templates; ++j) {
      bool match = true;
      for (std::size_t k = 0; k < m; ++k) {
        if (std::abs(x[i + k] - x[j + k]) > r) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      ++b;
      // templates of length m + 1 only exist for start indices below n - m
      if (j + m < n && std::abs(x[i + m] - x[j + m]) <= r) ++a;
    }
  }
  const double pairs = 0.5 * static_cast<double>(templates) * static_cast<double>(templates - 1);
  const double ceiling = cap.value_or(std::log(pairs));
  if (a == 0 || b == 0) return {ceiling, true};
  return {-std::log(static_cast<double>(a) / static_cast<double>(b)), sigma == 0.0};
}

FeatureVectorValue hist(std::span<const double> x, std::size_t bins, double threshold) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  FeatureVectorValue out{std::vector<double>(bins, 0.0), false};
  const double sigma = std::sqrt(variance_of(x));
  if (sigma == 0.0) {
    out.values[bins / 2] = static_cast<double>(x.size());
    out.degenerate = true;
    return out;
  }
  // edges measured from the mean
  const double mu = mean_of(x);
  const double width = 2.0 * threshold * sigma / static_cast<double>(bins);
  for (double v : x) {
    const double pos = std::floor((v - mu) / width + 0.5 * static_cast<double>(bins % 2)) + static_cast<double>(bins / 2);
    const auto idx = static_cast<std::ptrdiff_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    out.values[static_cast<std::size_t>(idx)] += 1.0;
  }
  return out;
}

std::vector<double> cepstral_from_ar(std::span<const double> a, std::size_t order) {
  if (a.size() < order) throw DataError("cepstral: fewer AR coefficients than the requested order");
  std::vector<double> c(order, 0.0);
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = -a[i - 1];
    for (std::size_t n = 1; n < i; ++n)
      acc -= (1.0 - static_cast<double>(n) / static_cast<double>(i)) * a[n - 1] * c[i - n - 1];
    c[i - 1] = acc;
  }
  return c;
}

FeatureVectorValue cepstral(std::span<const double> x, std::size_t order) {
  const FeatureVectorValue ar = ar_coefficients(x, order);
  return {cepstral_from_ar(ar.values, order), ar.degenerate};
}

// ---- feature sets ----------------------------------------------------------

std::string to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::TD: return "TD";
    case FeatureSet::EnhancedTD: return "EnhancedTD";
    case FeatureSet::NinaPro: return "NinaPro";
    case FeatureSet::SampEnPipeline: return "SampEnPipeline";
  }
  return "?";
}

FeatureSet parse_feature_set(const std::string& text) {
  if (text == "TD" || text == "td") return FeatureSet::TD;
  if (text == "EnhancedTD" || text == "enhanced-td") return FeatureSet::EnhancedTD;
  if (text == "NinaPro" || text == "ninapro") return FeatureSet::NinaPro;
  if (text == "SampEnPipeline" || text == "sampen") return FeatureSet::SampEnPipeline;
  throw ConfigError("unknown feature set '" + text + "'");
}

std::string FeatureDescriptor::column_name() const {
  return feature + "_ch" + std::to_string(channel) + "_" + std::to_string(index);
}

namespace {

struct FeatureSpec {
  const char* name;
  std::size_t dims;
};

std::vector<FeatureSpec> composition(FeatureSet set, const FeatureConfig& cfg) {
  switch (set) {
    case FeatureSet::TD:
      return {{"MAV", 1}, {"ZC", 1}, {"SSC", 1}, {"WL", 1}};
    case FeatureSet::EnhancedTD:
      return {{"MAV", 1}, {"ZC", 1},  {"SSC", 1},           {"WL", 1},
              {"Skewness", 1}, {"RMS", 1}, {"IEMG", 1}, {"AR", cfg.ar_order}, {"Hjorth", 3}};
    case FeatureSet::NinaPro:
      return {{"RMS", 1}, {"mDWT", mdwt_length()}, {"HIST", cfg.hist_bins},
              {"MAV", 1}, {"ZC", 1},               {"SSC", 1}, {"WL", 1}};
    case FeatureSet::SampEnPipeline:
      return {{"SampEn", 1}, {"Cepstral", cfg.cepstral_order}, {"RMS", 1}, {"WL", 1}};
  }
  return {};
}

FeatureVectorValue compute(const std::string& name, std::span<const double> x, const FeatureConfig& cfg) {
  auto scalar = [](double v, bool degenerate = false) { return FeatureVectorValue{{v}, degenerate}; };
  if (name == "MAV") return scalar(mav(x));
  if (name == "ZC") return scalar(static_cast<double>(zc(x, cfg.epsilon_zc)));
  if (name == "SSC") return scalar(static_cast<double>(ssc(x, cfg.epsilon_ssc)));
  if (name == "WL") return scalar(wl(x));
  if (name == "Skewness") {
    const auto s = skewness(x);
    return scalar(s.value, s.degenerate);
  }
  if (name == "RMS") return scalar(rms(x));
  if (name == "IEMG") return scalar(iemg(x));
  if (name == "AR") return ar_coefficients(x, cfg.ar_order);
  if (name == "Hjorth") {
    const auto h = hjorth(x);
    return {{h.activity, h.mobility, h.complexity}, h.degenerate};
  }
  if (name == "mDWT") return {mdwt(x), false};
  if (name == "HIST") return hist(x, cfg.hist_bins, cfg.hist_threshold);
  if (name == "SampEn") {
    const auto s = sampen(x, cfg.sampen_m, cfg.sampen_r_coeff, cfg.sampen_cap);
    return scalar(s.value, s.degenerate);
  }
  if (name == "Cepstral") return cepstral(x, cfg.cepstral_order);
  throw ConfigError("unknown feature '" + name + "'");
}

}  // namespace

std::vector<FeatureDescriptor> feature_layout(FeatureSet set, const FeatureConfig& cfg) {
  std::vector<FeatureDescriptor> layout;
  const auto parts = composition(set, cfg);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (const auto& p : parts)
      for (std::size_t i = 0; i < p.dims; ++i) layout.push_back({p.name, c, i});
  return layout;
}

FeatureVector assemble_feature_set(const Window& w, FeatureSet set, const FeatureConfig& cfg) {
  cfg.validate();
  FeatureVector out;
  out.layout = feature_layout(set, cfg);
  out.values.reserve(out.layout.size());
  const auto parts = composition(set, cfg);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto x = w.channel(c);
    for (const auto& p : parts) {
      const FeatureVectorValue v = compute(p.name, x, cfg);
      if (v.values.size() != p.dims) throw NumericalError(std::string(p.name) + ": unexpected dimensionality");
      if (v.degenerate)
        out.degenerate.push_back(FeatureDescriptor{p.name, c, 0}.column_name());
      out.values.insert(out.values.end(), v.values.begin(), v.values.end());
    }
  }
  return out;
}

std::vector<FeatureVector> extract_features(std::span<const Window> windows, FeatureSet set,
                                            const FeatureConfig& cfg, Backend backend) {
  cfg.validate();
  mdwt_length();
  std::vector<FeatureVector> out(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
  if (backend == Backend::Serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = assemble_feature_set(windows[i], set, cfg);
  } else {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = assemble_feature_set(windows[i], set, cfg);
  }
  return out;
}

}  // namespace emgtl
