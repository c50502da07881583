#include <charconv>
#include <fstream>
#include <sstream>

#include "emgtl/errors.hpp"
#include "emgtl/harness.hpp"
#include "emgtl/nn/checkpoint.hpp"

namespace emgtl {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

constexpr std::size_t kSkipSamples = static_cast<std::size_t>(kSampleRate);  // one second

}  // namespace

std::vector<SessionSample> read_session_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open session file");
  std::vector<SessionSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = file.string() + ":" + std::to_string(line_no) + ": ";
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (line_no == 1 && !f.empty() && f[0] == "timestamp") continue;
    if (f.size() != 2 + kChannels)
      throw DataError(where + "expected " + std::to_string(2 + kChannels) + " fields, got " + std::to_string(f.size()));
    SessionSample s;
    if (!parse_number(f[0], s.timestamp)) throw DataError(where + "bad timestamp '" + f[0] + "'");
    if (!parse_number(f[1], s.label) || s.label < 0) throw DataError(where + "bad label '" + f[1] + "'");
    for (std::size_t c = 0; c < kChannels; ++c) {
      int v = 0;
      if (!parse_number(f[2 + c], v)) throw DataError(where + "bad sample '" + f[2 + c] + "'");
      if (v < kSampleMin || v > kSampleMax)
        throw DataError(where + "sample " + std::to_string(v) + " outside [-128, 127]");
      s.samples[c] = v;
    }
    out.push_back(s);
  }
  if (out.empty()) throw DataError(file.string() + ": session file has no samples");
  return out;
}

std::size_t replay_window_count(std::size_t hold_samples, bool skip_first_second, std::size_t stride) {
  if (stride == 0) throw ConfigError("stride must be >= 1");
  const std::size_t skip = skip_first_second ? kSkipSamples : 0;
  if (hold_samples < skip + kWindowLength) return 0;
  return window_count(hold_samples - skip, stride);
}

std::vector<HoldAccuracy> run_session_replay(const std::vector<SessionSample>& session, nn::Model& model,
                                             const ArchitectureSpec& spec, int subject, bool skip_first_second,
                                             std::size_t stride, int alignment_shift) {
  std::vector<HoldAccuracy> timeline;
  const std::size_t skip = skip_first_second ? kSkipSamples : 0;
  std::size_t begin = 0;
  while (begin < session.size()) {
    std::size_t end = begin;
    while (end < session.size() && session[end].label == session[begin].label) ++end;

    HoldAccuracy h;
    h.hold = timeline.size();
    h.label = session[begin].label;
    h.start_timestamp = session[begin].timestamp;
    h.windows = replay_window_count(end - begin, skip_first_second, stride);
    if (h.windows > 0) {
      EmgRecording rec;
      rec.subject_id = subject;
      rec.gesture = h.label;
      for (std::size_t c = 0; c < kChannels; ++c) {
        rec.samples[c].reserve(end - begin - skip);
        for (std::size_t i = begin + skip; i < end; ++i) rec.samples[c].push_back(session[i].samples[c]);
      }
      if (alignment_shift != 0) rec = apply_shift(rec, alignment_shift);
      const auto windows = slice_windows(rec, stride);
      const auto pred = nn::predict(model, make_labeled_set(spec, windows));
      for (int p : pred) h.correct += p == h.label ? 1 : 0;
      h.accuracy = static_cast<double>(h.correct) / static_cast<double>(h.windows);
    }
    timeline.push_back(h);
    begin = end;
  }
  return timeline;
}

std::vector<HoldAccuracy> run_session_replay(const std::filesystem::path& session_file,
                                             const std::filesystem::path& checkpoint, bool skip_first_second) {
  const auto session = read_session_csv(session_file);
  LoadedModel m = load_model(checkpoint);
  const int shift = nn::read_checkpoint(checkpoint).value("alignment_shift", 0);
  return run_session_replay(session, *m.model, m.spec, m.subject, skip_first_second, kDefaultStride, shift);
}

std::string replay_csv(const std::vector<HoldAccuracy>& timeline) {
  std::ostringstream out;
  out << "hold,label,start_timestamp,windows,correct,accuracy\n";
  out.precision(10);
  for (const auto& h : timeline)
    out << h.hold << ',' << h.label << ',' << h.start_timestamp << ',' << h.windows << ',' << h.correct << ','
        << h.accuracy << '\n';
  return out.str();
}

}  // namespace emgtl
