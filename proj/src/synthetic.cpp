#include "emgtl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace emgtl {

std::vector<EmgRecording> make_synthetic_recordings(const SyntheticSpec& spec) {
  std::vector<EmgRecording> out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  for (int s = 0; s < spec.subjects; ++s) {
    const int rotation = spec.rotate_subjects ? (3 * s) % static_cast<int>(kChannels) : 0;
    const double gain = 1.0 + spec.subject_gain_step * s;
    const double offset = spec.subject_offset * s;
    for (int r = 1; r <= spec.rounds; ++r) {
      for (int c = 1; c <= spec.cycles; ++c) {
        for (int g = 0; g < spec.gestures; ++g) {
          EmgRecording rec;
          rec.subject_id = spec.first_subject_id + s;
          rec.round = r;
          rec.cycle = c;
          rec.gesture = g;
          const int centre = (g * static_cast<int>(kChannels)) / std::max(spec.gestures, 1);
          const double carrier = 15.0 + 70.0 * g / std::max(spec.gestures - 1, 1);
          for (std::size_t ch = 0; ch < kChannels; ++ch) {
            const int physical = static_cast<int>((ch + static_cast<std::size_t>(rotation)) % kChannels);
            int d = std::abs(physical - centre);
            d = std::min(d, static_cast<int>(kChannels) - d);
            const double amplitude = gain * (12.0 + 70.0 * std::exp(-0.5 * d * d));
            const double p1 = phase(rng), p2 = phase(rng);
            auto& row = rec.samples[ch];
            row.resize(spec.samples_per_hold);
            for (std::size_t t = 0; t < spec.samples_per_hold; ++t) {
              const double time = static_cast<double>(t) / kSampleRate;
              double v = 0.7 * std::sin(2.0 * std::numbers::pi * carrier * time + p1) +
                         0.3 * std::sin(2.0 * std::numbers::pi * (0.5 * carrier + 5.0) * time + p2) +
                         spec.noise * gauss(rng);
              v = amplitude * v + offset;
              row[t] = static_cast<int>(std::clamp(std::lround(v), static_cast<long>(kSampleMin),
                                                   static_cast<long>(kSampleMax)));
            }
          }
          out.push_back(std::move(rec));
        }
      }
    }
  }
  return out;
}

DatasetManifest synthetic_manifest(int gestures, DatasetSchema schema) {
  DatasetManifest m;
  m.schema = schema;
  for (int g = 0; g < gestures; ++g) m.gesture_names.push_back("gesture_" + std::to_string(g));
  return m;
}

}  // namespace emgtl
