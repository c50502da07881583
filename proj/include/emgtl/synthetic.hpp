#pragma once

#include <cstdint>
#include <vector>

#include "emgtl/dataset.hpp"

namespace emgtl {

/// Parameters of the synthetic gesture generator used by tests, benchmarks
/// and `emgtl convert --synthetic`. Each gesture drives a bump of activity
/// centred on its own channel with a gesture-specific carrier frequency.
struct SyntheticSpec {
  int subjects = 2;
  int first_subject_id = 0;
  int rounds = 3;
  int cycles = 4;
  int gestures = 7;
  std::size_t samples_per_hold = 1000;
  std::uint64_t seed = 1;
  double noise = 0.15;  // relative to the channel amplitude
  bool rotate_subjects = false;  // subject k is rotated by 3k channels
  double subject_offset = 0.0;  // DC offset added per subject index
  double subject_gain_step = 0.0;  // amplitude gain added per subject index
};

std::vector<EmgRecording> make_synthetic_recordings(const SyntheticSpec& spec);

DatasetManifest synthetic_manifest(int gestures, DatasetSchema schema = DatasetSchema::Myo);

}  // namespace emgtl
