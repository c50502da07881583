#include "emgtl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "emgtl/errors.hpp"

namespace emgtl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DatasetSchema schema) {
  return schema == DatasetSchema::Myo ? "myo" : "ninapro-converted";
}

DatasetSchema parse_schema(const std::string& text) {
  if (text == "myo") return DatasetSchema::Myo;
  if (text == "ninapro-converted" || text == "ninapro") return DatasetSchema::NinaProConverted;
  throw ConfigError("unknown dataset schema '" + text + "'");
}

void EmgRecording::validate() const {
  const std::size_t t = samples[0].size();
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (samples[c].size() != t) throw DataError("recording channels have unequal lengths");
    for (int v : samples[c]) {
      if (v < kSampleMin || v > kSampleMax)
        throw DataError("sample " + std::to_string(v) + " outside [-128,127]");
    }
  }
  if (t < kWindowLength)
    throw DataError("recording has " + std::to_string(t) + " samples, fewer than one window");
}

// ---- file format -----------------------------------------------------------

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path file = root / "manifest.json";
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": missing manifest");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.sample_rate = j.at("sample_rate").get<double>();
    m.num_channels = j.at("num_channels").get<std::size_t>();
    m.gesture_names = j.at("gesture_names").get<std::vector<std::string>>();
    m.schema = parse_schema(j.at("schema").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  if (m.num_channels != kChannels)
    throw DataError(file.string() + ": num_channels must be 8, got " + std::to_string(m.num_channels));
  if (m.sample_rate != kSampleRate)
    throw DataError(file.string() + ": sample_rate must be 200 Hz");
  return m;
}

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
  fs::create_directories(root);
  json j;
  j["sample_rate"] = manifest.sample_rate;
  j["num_channels"] = manifest.num_channels;
  j["gesture_names"] = manifest.gesture_names;
  j["schema"] = to_string(manifest.schema);
  std::ofstream out(root / "manifest.json");
  out << j.dump(2) << '\n';
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

EmgRecording read_recording_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open");
  EmgRecording rec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string_view rest(line);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto comma = rest.find(',');
      if ((comma == std::string_view::npos) != (c == kChannels - 1))
        throw DataError(file.string() + ":" + std::to_string(line_no) +
                        ": expected 8 comma-separated values");
      std::string_view field = trim(rest.substr(0, comma));
      int value = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": non-integer value '" +
                        std::string(field) + "'");
      if (value < kSampleMin || value > kSampleMax)
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": value " +
                        std::to_string(value) + " outside [-128,127]");
      rec.samples[c].push_back(value);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
  }
  if (rec.length() < kWindowLength)
    throw DataError(file.string() + ": " + std::to_string(rec.length()) +
                    " samples, fewer than one 52-sample window");
  return rec;
}

void write_recording_csv(const fs::path& file, const EmgRecording& rec) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError(file.string() + ": cannot write");
  for (std::size_t t = 0; t < rec.length(); ++t) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (c) out << ',';
      out << rec.samples[c][t];
    }
    out << '\n';
  }
}

fs::path recording_path(const fs::path& root, const EmgRecording& rec) {
  return root / ("subject_" + std::to_string(rec.subject_id)) / ("round_" + std::to_string(rec.round)) /
         ("cycle_" + std::to_string(rec.cycle)) / ("gesture_" + std::to_string(rec.gesture) + ".csv");
}

std::vector<EmgRecording> load_dataset(const fs::path& root,
                                       std::optional<DatasetSchema> expected_schema) {
  const DatasetManifest manifest = read_manifest(root);
  if (expected_schema && *expected_schema != manifest.schema)
    throw DataError(root.string() + ": manifest schema is '" + to_string(manifest.schema) +
                    "', expected '" + to_string(*expected_schema) + "'");

  static const std::regex layout(R"(subject_(\d+)/round_(\d+)/cycle_(\d+)/gesture_(\d+)\.csv)");
  struct Entry {
    fs::path path;
    int subject, round, cycle, gesture;
  };
  std::vector<Entry> entries;
  for (const auto& item : fs::recursive_directory_iterator(root)) {
    if (!item.is_regular_file() || item.path().extension() != ".csv") continue;
    const std::string rel = fs::relative(item.path(), root).generic_string();
    std::smatch m;
    if (!std::regex_match(rel, m, layout))
      throw DataError(item.path().string() + ": file does not follow the canonical layout");
    entries.push_back({item.path(), std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4])});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.path < b.path; });

  std::vector<EmgRecording> out(entries.size());
  std::vector<std::string> errors(entries.size());
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      EmgRecording rec = read_recording_csv(entries[i].path);
      rec.subject_id = entries[i].subject;
      rec.round = entries[i].round;
      rec.cycle = entries[i].cycle;
      rec.gesture = entries[i].gesture;
      out[i] = std::move(rec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
  for (const auto& rec : out) {
    if (!manifest.gesture_names.empty() &&
        rec.gesture >= static_cast<int>(manifest.gesture_names.size()))
      throw DataError(recording_path(root, rec).string() + ": gesture label beyond manifest gesture_names");
  }
  return out;
}

void write_dataset(const fs::path& root, const DatasetManifest& manifest,
                   std::span<const EmgRecording> recordings) {
  write_manifest(root, manifest);
  for (const auto& rec : recordings) write_recording_csv(recording_path(root, rec), rec);
}

// ---- windowing -------------------------------------------------------------

std::size_t window_count(std::size_t length, std::size_t stride) {
  if (stride == 0) throw ConfigError("stride must be >= 1");
  if (length < kWindowLength) return 0;
  return (length - kWindowLength) / stride + 1;
}

Window window_at(const EmgRecording& rec, std::size_t offset) {
  if (offset + kWindowLength > rec.length()) throw DataError("window exceeds recording length");
  Window w;
  w.label = rec.gesture;
  w.subject_id = rec.subject_id;
  w.round = rec.round;
  w.cycle = rec.cycle;
  w.offset = offset;
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t k = 0; k < kWindowLength; ++k)
      w.data[c * kWindowLength + k] = static_cast<double>(rec.samples[c][offset + k]);
  return w;
}

std::vector<Window> slice_windows(const EmgRecording& rec, std::size_t stride) {
  if (stride == 0) throw ConfigError("stride must be >= 1");
  if (rec.length() < kWindowLength)
    throw DataError("recording shorter than one window (" + std::to_string(rec.length()) + " samples)");
  std::vector<Window> out;
  out.reserve(window_count(rec.length(), stride));
  for (std::size_t offset = 0; offset + kWindowLength <= rec.length(); offset += stride)
    out.push_back(window_at(rec, offset));
  return out;
}

// ---- alignment -------------------------------------------------------------

ActivationProfile compute_activation_profile(std::span<const EmgRecording> recs) {
  int max_label = -1;
  for (const auto& r : recs) max_label = std::max(max_label, r.gesture);
  if (max_label < 0) throw DataError("activation profile needs at least one recording");
  const auto gestures = static_cast<std::size_t>(max_label + 1);
  ActivationProfile sums(gestures);
  std::vector<double> counts(gestures, 0.0);
  for (auto& row : sums) row.fill(0.0);
  for (const auto& r : recs) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      double iemg = 0.0;
      for (int v : r.samples[c]) iemg += std::abs(static_cast<double>(v));
      sums[r.gesture][c] += iemg;
    }
    counts[r.gesture] += static_cast<double>(r.length());
  }
  std::string missing;
  for (std::size_t g = 0; g < gestures; ++g)
    if (counts[g] == 0.0) missing += (missing.empty() ? "" : ",") + std::to_string(g);
  if (!missing.empty()) throw DataError("activation profile: no recordings for gesture(s) " + missing);

  for (std::size_t g = 0; g < gestures; ++g) {
    double l1 = 0.0;
    for (auto& v : sums[g]) {
      v /= counts[g];
      l1 += v;
    }
    if (l1 <= 0.0)
      throw NumericalError("degenerate activation profile: gesture " + std::to_string(g) +
                           " has zero activity on every channel");
    for (auto& v : sums[g]) v /= l1;
  }
  return sums;
}

double alignment_cost(const ActivationProfile& reference, const ActivationProfile& candidate,
                      int shift) {
  double cost = 0.0;
  for (std::size_t g = 0; g < reference.size(); ++g)
    for (std::size_t i = 0; i < kChannels; ++i)
      cost += std::abs(reference[g][i] - candidate[g][(i + static_cast<std::size_t>(shift)) % kChannels]);
  return cost;
}

AlignmentShift find_alignment(const ActivationProfile& reference, const ActivationProfile& candidate) {
  if (reference.size() != candidate.size())
    throw DataError("alignment profiles have different gesture counts");
  AlignmentShift best{0, reference};
  double best_cost = alignment_cost(reference, candidate, 0);
  for (int s = 1; s < static_cast<int>(kChannels); ++s) {
    const double cost = alignment_cost(reference, candidate, s);
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best.shift = s;
    }
  }
  return best;
}

namespace {
std::size_t wrap(int shift) {
  const int m = static_cast<int>(kChannels);
  return static_cast<std::size_t>(((shift % m) + m) % m);
}
}  // namespace

Window apply_shift(const Window& w, int shift) {
  const std::size_t s = wrap(shift);
  Window out = w;
  for (std::size_t i = 0; i < kChannels; ++i) {
    const auto src = w.channel((i + s) % kChannels);
    std::copy(src.begin(), src.end(), out.channel(i).begin());
  }
  return out;
}

EmgRecording apply_shift(const EmgRecording& rec, int shift) {
  const std::size_t s = wrap(shift);
  EmgRecording out = rec;
  for (std::size_t i = 0; i < kChannels; ++i) out.samples[i] = rec.samples[(i + s) % kChannels];
  return out;
}

// ---- protocols -------------------------------------------------------------

bool RecordingSelector::matches(const EmgRecording& rec) const {
  return (rounds.empty() || rounds.count(rec.round)) && (cycles.empty() || cycles.count(rec.cycle)) &&
         (gestures.empty() || gestures.count(rec.gesture));
}

namespace {

std::map<int, std::set<int>> cycles_by_round(std::span<const EmgRecording> recs) {
  std::map<int, std::set<int>> out;
  for (const auto& r : recs) out[r.round].insert(r.cycle);
  return out;
}

std::set<int> first_n(const std::set<int>& values, int n) {
  std::set<int> out;
  for (int v : values) {
    if (static_cast<int>(out.size()) == n) break;
    out.insert(v);
  }
  return out;
}

}  // namespace

ProtocolSelectors resolve_protocol(const Protocol& protocol, std::span<const EmgRecording> recs) {
  const auto layout = cycles_by_round(recs);
  if (layout.empty()) throw DataError("protocol needs at least one recording");
  ProtocolSelectors sel;
  const int first_round = layout.begin()->first;
  const std::set<int>& first_cycles = layout.begin()->second;

  ProtocolKind kind = protocol.kind == ProtocolKind::OutOfSample ? protocol.base : protocol.kind;
  switch (kind) {
    case ProtocolKind::MyoEval: {
      if (protocol.amount < 1 || protocol.amount > 4) throw ConfigError("myo-eval cycles must be in 1..4");
      if (static_cast<int>(first_cycles.size()) < protocol.amount)
        throw DataError("myo-eval requested " + std::to_string(protocol.amount) + " cycles, round " +
                        std::to_string(first_round) + " has " + std::to_string(first_cycles.size()));
      if (layout.size() < 2) throw DataError("myo-eval needs test rounds after the training round");
      sel.train.rounds = {first_round};
      sel.train.cycles = first_n(first_cycles, protocol.amount);
      for (const auto& [round, cycles] : layout)
        if (round != first_round) sel.test.rounds.insert(round);
      break;
    }
    case ProtocolKind::NinaPro: {
      if (protocol.amount < 1 || protocol.amount > 4) throw ConfigError("ninapro repetitions must be in 1..4");
      const int available = static_cast<int>(first_cycles.size());
      if (available < protocol.amount + 2)
        throw DataError("ninapro requested " + std::to_string(protocol.amount) +
                        " training repetitions plus two test repetitions, found " + std::to_string(available));
      sel.train.rounds = {first_round};
      sel.train.cycles = first_n(first_cycles, protocol.amount);
      sel.test.rounds = {first_round};
      auto it = first_cycles.rbegin();
      sel.test.cycles.insert(*it++);
      sel.test.cycles.insert(*it);
      break;
    }
    case ProtocolKind::AugmentationAblation: {
      if (first_cycles.size() < 4) throw DataError("augmentation ablation needs four cycles in the first round");
      auto it = first_cycles.begin();
      const int c1 = *it++, c2 = *it++, c3 = *it++, c4 = *it;
      sel.train.rounds = sel.validation.rounds = sel.test.rounds = {first_round};
      sel.train.cycles = {c1, c2};
      sel.validation.cycles = {c3};
      sel.has_validation = true;
      sel.test.cycles = {c4};
      break;
    }
    case ProtocolKind::OutOfSample:
      throw ConfigError("out-of-sample base protocol cannot itself be out-of-sample");
  }
  if (protocol.kind == ProtocolKind::OutOfSample) {
    if (protocol.gesture_subset.empty()) throw ConfigError("out-of-sample protocol needs a gesture subset");
    sel.train.gestures = sel.test.gestures = sel.validation.gestures =
        std::set<int>(protocol.gesture_subset.begin(), protocol.gesture_subset.end());
  }
  return sel;
}

DatasetSplit build_split(std::span<const EmgRecording> recs, const Protocol& protocol, std::size_t stride) {
  const ProtocolSelectors sel = resolve_protocol(protocol, recs);
  DatasetSplit split;
  split.cycles_used = protocol.amount;
  split.stride = stride;
  std::set<int> subjects;
  for (const auto& rec : recs) {
    if (sel.train.matches(rec)) {
      auto w = slice_windows(rec, stride);
      split.train.insert(split.train.end(), w.begin(), w.end());
      split.train_sources.push_back(rec);
      subjects.insert(rec.subject_id);
    } else if (sel.test.matches(rec)) {
      auto w = slice_windows(rec, stride);
      split.test.insert(split.test.end(), w.begin(), w.end());
      subjects.insert(rec.subject_id);
    }
  }
  split.subjects.assign(subjects.begin(), subjects.end());
  return split;
}

int remap_label(const std::vector<int>& subset, int label) {
  const auto it = std::find(subset.begin(), subset.end(), label);
  if (it == subset.end()) throw DataError("label " + std::to_string(label) + " outside gesture subset");
  return static_cast<int>(it - subset.begin());
}

}  // namespace emgtl
