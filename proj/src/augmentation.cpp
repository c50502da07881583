#include "emgtl/augmentation.hpp"

#include <cmath>
#include <complex>
#include <random>

#include "emgtl/dft.hpp"
#include "emgtl/errors.hpp"

namespace emgtl {

std::string to_string(AugmentationTechnique t) {
  switch (t) {
    case AugmentationTechnique::Baseline: return "baseline";
    case AugmentationTechnique::SlidingWindow: return "sliding-window";
    case AugmentationTechnique::MuscleFatigue: return "muscle-fatigue";
    case AugmentationTechnique::ElectrodeDisplacement: return "electrode-displacement";
    case AugmentationTechnique::GaussianNoise: return "gaussian-noise";
    case AugmentationTechnique::Aggregated: return "aggregated";
  }
  return "?";
}

AugmentationTechnique parse_augmentation(const std::string& text) {
  for (auto t : {AugmentationTechnique::Baseline, AugmentationTechnique::SlidingWindow,
                 AugmentationTechnique::MuscleFatigue, AugmentationTechnique::ElectrodeDisplacement,
                 AugmentationTechnique::GaussianNoise, AugmentationTechnique::Aggregated})
    if (to_string(t) == text) return t;
  throw ConfigError("unknown augmentation technique '" + text + "'");
}

void AugmentationConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(fatigue_probability) || !unit(fatigue_fraction) || !unit(displacement_fraction))
    throw ConfigError("augmentation fractions and probabilities must lie in [0,1]");
  if (multiplier < 1) throw ConfigError("augmentation multiplier must be >= 1");
}

Window augment_gaussian(const Window& w, double snr_db, std::uint64_t seed) {
  Window out = w;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < kChannels; ++c) {
    auto x = out.channel(c);
    double power = 0.0;
    for (double v : x) power += v * v;
    power /= static_cast<double>(kWindowLength);
    if (power == 0.0) continue;
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);
    std::normal_distribution<double> noise(0.0, std::sqrt(noise_power));
    for (double& v : x) v += noise(rng);
  }
  return out;
}

namespace {

using Spectrum = std::vector<std::complex<double>>;

std::complex<double> with_magnitude(double magnitude, std::complex<double> phase_source,
                                    std::complex<double> fallback = {1.0, 0.0}) {
  const double m = std::abs(phase_source);
  if (m > 0.0) return phase_source * (magnitude / m);
  const double fm = std::abs(fallback);
  return fm > 0.0 ? fallback * (magnitude / fm) : std::complex<double>(magnitude, 0.0);
}

}  // namespace

Window augment_fatigue(const Window& w, double probability, double fraction, std::uint64_t seed) {
  Window out = w;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution apply(probability);
  const std::size_t n = kWindowLength;
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!apply(rng) || fraction == 0.0) continue;
    const Spectrum bins = dft::real_forward(w.channel(c));
    // two-sided power per half-spectrum bin
    std::vector<double> power(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) power[k] = dft::bin_weight(k, n) * std::norm(bins[k]);
    for (std::size_t k = bins.size() - 1; k >= 1; --k) {
      const double moved = fraction * power[k];
      power[k] -= moved;
      power[k - 1] += moved;
    }
    Spectrum shaped(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
      const double magnitude = std::sqrt(power[k] / dft::bin_weight(k, n));
      // DC and Nyquist must stay real; keep their sign
      if (dft::bin_weight(k, n) == 1.0)
        shaped[k] = {bins[k].real() < 0.0 ? -magnitude : magnitude, 0.0};
      else
        shaped[k] = with_magnitude(magnitude, bins[k]);
    }
    const auto y = dft::real_inverse(shaped, n);
    std::copy(y.begin(), y.end(), out.channel(c).begin());
  }
  return out;
}

Window augment_displacement(const Window& w, double fraction) {
  Window out = w;
  if (fraction == 0.0) return out;
  const std::size_t n = kWindowLength;
  std::vector<Spectrum> spectra(kChannels);
  for (std::size_t c = 0; c < kChannels; ++c) spectra[c] = dft::real_forward(w.channel(c));
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::size_t donor = (c + kChannels - 1) % kChannels;
    Spectrum shaped(spectra[c].size());
    for (std::size_t k = 0; k < shaped.size(); ++k) {
      const double magnitude = (1.0 - fraction) * std::abs(spectra[c][k]) + fraction * std::abs(spectra[donor][k]);
      if (dft::bin_weight(k, n) == 1.0) {
        const double sign_source = spectra[c][k].real() != 0.0 ? spectra[c][k].real() : spectra[donor][k].real();
        shaped[k] = {sign_source < 0.0 ? -magnitude : magnitude, 0.0};
      } else {
        // a silent bin borrows the donor's phase
        shaped[k] = with_magnitude(magnitude, spectra[c][k], spectra[donor][k]);
      }
    }
    const auto y = dft::real_inverse(shaped, n);
    std::copy(y.begin(), y.end(), out.channel(c).begin());
  }
  return out;
}

double median_frequency(std::span<const double> x) {
  const auto bins = dft::real_forward(x);
  std::vector<double> power(bins.size());
  double total = 0.0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    power[k] = dft::bin_weight(k, x.size()) * std::norm(bins[k]);
    total += power[k];
  }
  if (total == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    acc += power[k];
    if (acc >= 0.5 * total) return static_cast<double>(k) * kSampleRate / static_cast<double>(x.size());
  }
  return kSampleRate / 2.0;
}

namespace {

// Window from the same recording, half-way (or 1/multiplier-way) between the
// stride positions; falls back to the original window when no recording is
// known.
Window densified(const DatasetSplit& split, const Window& w, int step, int multiplier) {
  for (const auto& rec : split.train_sources) {
    if (rec.subject_id != w.subject_id || rec.round != w.round || rec.cycle != w.cycle || rec.gesture != w.label)
      continue;
    const std::size_t delta = std::max<std::size_t>(1, split.stride * static_cast<std::size_t>(step) /
                                                           static_cast<std::size_t>(multiplier));
    std::size_t offset = w.offset + delta;
    if (offset + kWindowLength > rec.length()) offset = w.offset >= delta ? w.offset - delta : 0;
    return window_at(rec, offset);
  }
  return w;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t index, int copy) {
  return seed ^ (static_cast<std::uint64_t>(index) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(copy));
}

}  // namespace

DatasetSplit augment_dataset(const DatasetSplit& split, const AugmentationConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw DataError("augment_dataset: empty training set");
  DatasetSplit out = split;
  if (cfg.multiplier == 1 || cfg.technique == AugmentationTechnique::Baseline) return out;

  const std::size_t original = split.train.size();
  const auto copies = static_cast<std::size_t>(cfg.multiplier - 1);
  std::vector<Window> extra(original * copies);
  const auto n = static_cast<std::ptrdiff_t>(original);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Window& w = split.train[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < copies; ++j) {
      const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::size_t>(i), static_cast<int>(j));
      const int step = static_cast<int>(j) + 1;
      Window a;
      switch (cfg.technique) {
        case AugmentationTechnique::SlidingWindow:
          a = densified(split, w, step, cfg.multiplier);
          break;
        case AugmentationTechnique::MuscleFatigue:
          a = augment_fatigue(w, cfg.fatigue_probability, cfg.fatigue_fraction, seed);
          break;
        case AugmentationTechnique::ElectrodeDisplacement:
          a = augment_displacement(w, cfg.displacement_fraction);
          break;
        case AugmentationTechnique::GaussianNoise:
          a = augment_gaussian(w, cfg.snr_db, seed);
          break;
        case AugmentationTechnique::Aggregated:
          a = densified(split, w, step, cfg.multiplier);
          a = augment_fatigue(a, cfg.fatigue_probability, cfg.fatigue_fraction, seed);
          a = augment_displacement(a, cfg.displacement_fraction);
          a = augment_gaussian(a, cfg.snr_db, seed + 1);
          break;
        case AugmentationTechnique::Baseline:
          a = w;
          break;
      }
      a.label = w.label;
      a.subject_id = w.subject_id;
      extra[static_cast<std::size_t>(i) * copies + j] = a;
    }
  }
  out.train.insert(out.train.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace emgtl
