#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgtl/dataset.hpp"

namespace emgtl {

enum class AugmentationTechnique {
  Baseline,
  SlidingWindow,
  MuscleFatigue,
  ElectrodeDisplacement,
  GaussianNoise,
  Aggregated,
};

std::string to_string(AugmentationTechnique t);
AugmentationTechnique parse_augmentation(const std::string& text);

struct AugmentationConfig {
  AugmentationTechnique technique = AugmentationTechnique::SlidingWindow;
  double fatigue_probability = 0.5;
  double fatigue_fraction = 0.35;
  double displacement_fraction = 0.35;
  double snr_db = 25.0;
  int multiplier = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adds white Gaussian noise per channel at the requested SNR (dB). Channels
/// with zero power are returned unchanged.
Window augment_gaussian(const Window& w, double snr_db, std::uint64_t seed);

/// With the given probability per channel, moves `fraction` of each bin's
/// power to the next lower bin, cascading from the highest bin down, then
/// resynthesises with the original phases.
Window augment_fatigue(const Window& w, double probability, double fraction, std::uint64_t seed);

/// Moves `fraction` of every bin's magnitude from channel c to channel c+1
/// (mod 8); each channel keeps its own phases.
Window augment_displacement(const Window& w, double fraction);

/// Median frequency (Hz) of a 52-sample signal's two-sided power spectrum.
double median_frequency(std::span<const double> x);

/// Grows the training set to multiplier x its size; the test set is left
/// untouched. Sliding-window augmentation adds real windows at intermediate
/// offsets of the source recordings; the other techniques synthesise copies.
DatasetSplit augment_dataset(const DatasetSplit& split, const AugmentationConfig& cfg);

}  // namespace emgtl
