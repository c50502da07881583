#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace emgtl {

inline constexpr std::size_t kChannels = 8;
inline constexpr std::size_t kWindowLength = 52;  // 260 ms at 200 Hz
inline constexpr std::size_t kDefaultStride = 5;  // 235 ms overlap
inline constexpr double kSampleRate = 200.0;
inline constexpr int kSampleMin = -128;
inline constexpr int kSampleMax = 127;

enum class DatasetSchema { Myo, NinaProConverted };

std::string to_string(DatasetSchema schema);
DatasetSchema parse_schema(const std::string& text);

/// One uninterrupted gesture hold, channel-major.
struct EmgRecording {
  int subject_id = 0;
  int round = 1;
  int cycle = 1;
  int gesture = 0;
  std::array<std::vector<int>, kChannels> samples;

  std::size_t length() const { return samples[0].size(); }
  /// Throws DataError when the channel rows disagree, are shorter than one
  /// window, or hold a value outside the armband range.
  void validate() const;
};

/// 8x52 slice of a recording; the unit of classification.
struct Window {
  std::array<double, kChannels * kWindowLength> data{};
  int label = 0;
  int subject_id = 0;
  // provenance, used for split disjointness and stride densification
  int round = 0;
  int cycle = 0;
  std::size_t offset = 0;

  std::span<double, kWindowLength> channel(std::size_t c) {
    return std::span<double, kWindowLength>(data.data() + c * kWindowLength, kWindowLength);
  }
  std::span<const double, kWindowLength> channel(std::size_t c) const {
    return std::span<const double, kWindowLength>(data.data() + c * kWindowLength, kWindowLength);
  }
};

struct DatasetManifest {
  double sample_rate = kSampleRate;
  std::size_t num_channels = kChannels;
  std::vector<std::string> gesture_names;
  DatasetSchema schema = DatasetSchema::Myo;
};

struct DatasetSplit {
  std::vector<Window> train;
  std::vector<Window> test;
  std::vector<int> subjects;
  int cycles_used = 0;
  // recordings the train windows were cut from, with the stride used;
  // lets sliding-window augmentation add real (non-synthetic) windows
  std::vector<EmgRecording> train_sources;
  std::size_t stride = kDefaultStride;
};

/// Circular channel rotation plus the reference it was fitted against.
struct AlignmentShift {
  int shift = 0;
  std::vector<std::array<double, kChannels>> reference_profile;
};

using ActivationProfile = std::vector<std::array<double, kChannels>>;

// ---- file format -----------------------------------------------------------

DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

/// Reads one gesture CSV (no header, 8 integer columns per line).
EmgRecording read_recording_csv(const std::filesystem::path& file);
void write_recording_csv(const std::filesystem::path& file, const EmgRecording& rec);

std::filesystem::path recording_path(const std::filesystem::path& root, const EmgRecording& rec);

/// Loads every recording below `root`, sorted by path. Files are parsed in
/// parallel; the result order does not depend on the thread count.
std::vector<EmgRecording> load_dataset(const std::filesystem::path& root,
                                       std::optional<DatasetSchema> expected_schema = std::nullopt);

void write_dataset(const std::filesystem::path& root, const DatasetManifest& manifest,
                   std::span<const EmgRecording> recordings);

// ---- windowing -------------------------------------------------------------

std::size_t window_count(std::size_t length, std::size_t stride);
std::vector<Window> slice_windows(const EmgRecording& rec, std::size_t stride = kDefaultStride);
Window window_at(const EmgRecording& rec, std::size_t offset);

// ---- alignment -------------------------------------------------------------

/// Per-gesture mean IEMG per channel, each row L1-normalised. Row g belongs to
/// gesture label g; labels 0..max must all be present.
ActivationProfile compute_activation_profile(std::span<const EmgRecording> recs);

/// L1 cost between `reference` and `candidate` rotated by `shift`.
double alignment_cost(const ActivationProfile& reference, const ActivationProfile& candidate,
                      int shift);

AlignmentShift find_alignment(const ActivationProfile& reference,
                              const ActivationProfile& candidate);

/// Output channel i takes input channel (i + shift) mod 8.
Window apply_shift(const Window& w, int shift);
EmgRecording apply_shift(const EmgRecording& rec, int shift);
inline Window apply_shift(const Window& w, const AlignmentShift& s) { return apply_shift(w, s.shift); }
inline EmgRecording apply_shift(const EmgRecording& rec, const AlignmentShift& s) {
  return apply_shift(rec, s.shift);
}

// ---- protocols -------------------------------------------------------------

enum class ProtocolKind { MyoEval, NinaPro, OutOfSample, AugmentationAblation };

struct Protocol {
  ProtocolKind kind = ProtocolKind::MyoEval;
  int amount = 4;  // cycles (myo-eval) or repetitions (ninapro)
  std::vector<int> gesture_subset;  // out-of-sample only
  ProtocolKind base = ProtocolKind::NinaPro;  // out-of-sample only

  static Protocol myo_eval(int cycles) { return {ProtocolKind::MyoEval, cycles, {}, {}}; }
  static Protocol ninapro(int repetitions) { return {ProtocolKind::NinaPro, repetitions, {}, {}}; }
  static Protocol out_of_sample(std::vector<int> subset, int repetitions,
                                ProtocolKind base = ProtocolKind::NinaPro) {
    return {ProtocolKind::OutOfSample, repetitions, std::move(subset), base};
  }
  static Protocol augmentation_ablation() { return {ProtocolKind::AugmentationAblation, 2, {}, {}}; }
};

/// Which recordings a protocol phase is allowed to touch.
struct RecordingSelector {
  std::set<int> rounds;  // empty = any
  std::set<int> cycles;  // empty = any
  std::set<int> gestures;  // empty = any
  bool matches(const EmgRecording& rec) const;
};

struct ProtocolSelectors {
  RecordingSelector train;
  RecordingSelector validation;  // empty rounds+cycles+gestures means "none"
  bool has_validation = false;
  RecordingSelector test;
};

/// Resolves a protocol against the rounds/cycles present in `recs`; throws
/// DataError when the protocol asks for more than is available.
ProtocolSelectors resolve_protocol(const Protocol& protocol, std::span<const EmgRecording> recs);

DatasetSplit build_split(std::span<const EmgRecording> recs, const Protocol& protocol,
                         std::size_t stride = kDefaultStride);

/// Remaps labels of an out-of-sample subset onto 0..k-1 (subset order).
int remap_label(const std::vector<int>& subset, int label);

}  // namespace emgtl
