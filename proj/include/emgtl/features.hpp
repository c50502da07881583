#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emgtl/dataset.hpp"
#include "emgtl/parallel.hpp"

namespace emgtl {

struct FeatureConfig {
  double epsilon_zc = 0.0;
  double epsilon_ssc = 0.0;
  std::size_t ar_order = 11;  // Enhanced TD
  std::size_t cepstral_order = 4;  // SampEn pipeline
  std::size_t sampen_m = 2;
  double sampen_r_coeff = 0.2;
  std::optional<double> sampen_cap;  // defaults to ln of the template-pair count
  std::size_t hist_bins = 20;
  double hist_threshold = 3.0;  // in units of sigma

  void validate() const;
};

/// A scalar-valued feature together with its degeneracy flag.
struct FeatureValue {
  double value = 0.0;
  bool degenerate = false;
};

struct FeatureVectorValue {
  std::vector<double> values;
  bool degenerate = false;
};

// Per-channel features on one signal x.
double mav(std::span<const double> x);
std::size_t ssc(std::span<const double> x, double epsilon);
std::size_t zc(std::span<const double> x, double epsilon);
double wl(std::span<const double> x);
FeatureValue skewness(std::span<const double> x);
double rms(std::span<const double> x);
double iemg(std::span<const double> x);

struct Hjorth {
  double activity = 0.0;
  double mobility = 0.0;
  double complexity = 0.0;
  bool degenerate = false;
};
Hjorth hjorth(std::span<const double> x);

/// Yule-Walker AR(P) coefficients rho_1..rho_P via Levinson-Durbin on the
/// biased autocorrelation, for the model x_k = sum rho_j x_{k-j} + e.
FeatureVectorValue ar_coefficients(std::span<const double> x, std::size_t order);

/// Levinson-Durbin on a given autocorrelation sequence r_0..r_P.
std::vector<double> levinson_durbin(std::span<const double> autocorrelation, std::size_t order);

/// Sample entropy with Chebyshev distance, self-matches excluded,
/// r = r_coeff * population sigma. When no matches exist the value is
/// replaced by `cap` (or ln of the number of template pairs) and flagged.
FeatureValue sampen(std::span<const double> x, std::size_t m = 2, double r_coeff = 0.2,
                    std::optional<double> cap = std::nullopt);

/// Counts over n equal bins spanning mean +- threshold * sigma; samples
/// beyond the range fall into the edge bins.
FeatureVectorValue hist(std::span<const double> x, std::size_t bins = 20, double threshold = 3.0);

/// Cepstral coefficients from AR coefficients a_1..a_P:
/// c_1 = -a_1, c_i = -a_i - sum_{n<i} (1 - n/i) a_n c_{i-n}.
std::vector<double> cepstral_from_ar(std::span<const double> ar, std::size_t order);
FeatureVectorValue cepstral(std::span<const double> x, std::size_t order = 4);

// ---- feature sets ----------------------------------------------------------

enum class FeatureSet { TD, EnhancedTD, NinaPro, SampEnPipeline };

std::string to_string(FeatureSet set);
FeatureSet parse_feature_set(const std::string& text);

struct FeatureDescriptor {
  std::string feature;
  std::size_t channel = 0;
  std::size_t index = 0;  // position within a vector-valued feature

  std::string column_name() const;
  bool operator==(const FeatureDescriptor&) const = default;
};

struct FeatureVector {
  std::vector<double> values;
  std::vector<FeatureDescriptor> layout;
  std::vector<std::string> degenerate;  // column names whose feature hit a degenerate input
};

/// Layout of a feature set: channel-major, features in declaration order.
std::vector<FeatureDescriptor> feature_layout(FeatureSet set, const FeatureConfig& cfg = {});

FeatureVector assemble_feature_set(const Window& w, FeatureSet set, const FeatureConfig& cfg = {});

/// Feature matrix for many windows (rows follow the input order).
std::vector<FeatureVector> extract_features(std::span<const Window> windows, FeatureSet set,
                                            const FeatureConfig& cfg = {},
                                            Backend backend = default_backend());

}  // namespace emgtl
