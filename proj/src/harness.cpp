#include "emgtl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "emgtl/errors.hpp"
#include "emgtl/nn/checkpoint.hpp"
#include "emgtl/transfer.hpp"

namespace emgtl {

using nlohmann::json;

namespace {

template <typename F>
auto in_stage(const std::string& stage, int subject, F&& f) -> decltype(f()) {
  const std::string where =
      "stage '" + stage + "'" + (subject >= 0 ? " (subject " + std::to_string(subject) + ")" : "") + ": ";
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  } catch (const std::exception& e) {
    throw DataError(where + e.what());
  }
}

std::vector<int> subject_ids(const std::vector<EmgRecording>& catalog, const std::vector<int>& wanted) {
  std::set<int> ids;
  for (const auto& r : catalog) ids.insert(r.subject_id);
  if (wanted.empty()) return {ids.begin(), ids.end()};
  for (int id : wanted)
    if (!ids.count(id)) throw DataError("subject " + std::to_string(id) + " is not in the dataset");
  std::vector<int> out(wanted.begin(), wanted.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<EmgRecording> of_subject(const std::vector<EmgRecording>& catalog, int subject) {
  std::vector<EmgRecording> out;
  for (const auto& r : catalog)
    if (r.subject_id == subject) out.push_back(r);
  return out;
}

Protocol make_protocol(const ExperimentConfig& cfg) {
  auto base = [&](ExperimentProtocol p) {
    return p == ExperimentProtocol::NinaPro ? ProtocolKind::NinaPro : ProtocolKind::MyoEval;
  };
  switch (cfg.protocol) {
    case ExperimentProtocol::NinaPro: return Protocol::ninapro(cfg.cycles);
    case ExperimentProtocol::OutOfSample:
      return Protocol::out_of_sample(cfg.gesture_subset, cfg.cycles, base(cfg.base_protocol));
    case ExperimentProtocol::AugmentationAblation: return Protocol::augmentation_ablation();
    default: return Protocol::myo_eval(cfg.cycles);
  }
}

// Per-gesture activation rows present in `recs`.
std::map<int, std::array<double, kChannels>> profile_rows(const std::vector<EmgRecording>& recs) {
  std::map<int, std::vector<EmgRecording>> by_gesture;
  for (const auto& r : recs) by_gesture[r.gesture].push_back(r);
  std::map<int, std::array<double, kChannels>> out;
  for (auto& [g, list] : by_gesture) {
    for (auto& r : list) r.gesture = 0;
    out[g] = compute_activation_profile(list).at(0);
  }
  return out;
}

// Shift aligning `recs` to the reference rows of the gestures both share.
int fit_shift(const ActivationProfile& reference, const std::vector<EmgRecording>& recs) {
  const auto rows = profile_rows(recs);
  ActivationProfile ref, cand;
  for (const auto& [g, row] : rows)
    if (g >= 0 && static_cast<std::size_t>(g) < reference.size()) {
      ref.push_back(reference[static_cast<std::size_t>(g)]);
      cand.push_back(row);
    }
  if (ref.empty()) throw DataError("no gesture in common with the alignment reference");
  return find_alignment(ref, cand).shift;
}

ActivationProfile full_profile(const std::vector<EmgRecording>& recs) {
  const auto rows = profile_rows(recs);
  ActivationProfile out;
  if (rows.empty()) return out;
  out.resize(static_cast<std::size_t>(rows.rbegin()->first + 1));
  for (const auto& [g, row] : rows)
    if (g >= 0) out[static_cast<std::size_t>(g)] = row;
  return out;
}

// Out-of-sample runs renumber the gesture subset to 0..k-1.
std::vector<EmgRecording> relabeled(std::vector<EmgRecording> recs, const std::vector<int>& subset) {
  if (!subset.empty())
    for (auto& r : recs) r.gesture = remap_label(subset, r.gesture);
  return recs;
}

std::vector<Window> windows_of(const std::vector<EmgRecording>& recs, std::size_t stride) {
  std::vector<Window> out;
  for (const auto& r : recs) {
    auto w = slice_windows(r, stride);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::vector<EmgRecording> shifted(std::vector<EmgRecording> recs, int shift) {
  if (shift != 0)
    for (auto& r : recs) r = apply_shift(r, shift);
  return recs;
}

Eigen::MatrixXd feature_matrix(const std::vector<Window>& windows, FeatureSet set, std::size_t* degenerate) {
  const auto fv = extract_features(windows, set);
  const std::size_t d = feature_layout(set).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(windows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < fv.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fv[i].values[j];
    if (degenerate && !fv[i].degenerate.empty()) ++*degenerate;
  }
  return m;
}

std::vector<int> labels_of(const std::vector<Window>& w) {
  std::vector<int> out;
  for (const auto& x : w) out.push_back(x.label);
  return out;
}

ArchitectureSpec convnet_spec(const ModelConfig& m, std::size_t num_classes, std::uint64_t seed) {
  ArchitectureSpec spec = default_spec(m.architecture, num_classes);
  if (m.widths) spec.widths = *m.widths;
  if (m.dropout) spec.dropout = *m.dropout;
  if (m.channels) spec.channels = *m.channels;
  spec.seed = seed;
  return spec;
}

nn::TrainConfig train_config(const TrainSettings& t, double default_lr, std::uint64_t seed) {
  nn::TrainConfig c;
  c.learning_rate = t.learning_rate.value_or(default_lr);
  c.batch_size = t.batch_size;
  c.max_epochs = t.max_epochs;
  c.patience_epochs = t.patience_epochs;
  c.validation_fraction = t.validation_fraction;
  c.seed = seed;
  return c;
}

std::uint64_t second_seed(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 0x51ed2701ULL; }

json get_strict(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  return j;
}

}  // namespace

// ---------------------------------------------------------------- config

std::string to_string(ExperimentProtocol p) {
  switch (p) {
    case ExperimentProtocol::MyoEval: return "myo-eval";
    case ExperimentProtocol::NinaPro: return "ninapro";
    case ExperimentProtocol::OutOfSample: return "out-of-sample";
    case ExperimentProtocol::AugmentationAblation: return "augmentation-ablation";
    case ExperimentProtocol::DimReduction: return "dim-reduction";
    case ExperimentProtocol::SessionReplay: return "session-replay";
  }
  return "?";
}

ExperimentProtocol parse_protocol(const std::string& text) {
  for (auto p : {ExperimentProtocol::MyoEval, ExperimentProtocol::NinaPro, ExperimentProtocol::OutOfSample,
                 ExperimentProtocol::AugmentationAblation, ExperimentProtocol::DimReduction,
                 ExperimentProtocol::SessionReplay})
    if (text == to_string(p)) return p;
  throw ConfigError("unknown protocol '" + text + "'");
}

std::string to_string(RunStage s) {
  switch (s) {
    case RunStage::Catalog: return "catalog";
    case RunStage::Align: return "align";
    case RunStage::Train: return "train";
    case RunStage::Validate: return "validate";
    case RunStage::Evaluate: return "evaluate";
  }
  return "?";
}

std::string ModelConfig::name() const {
  if (kind == Kind::ConvNet) return to_string(architecture);
  std::string s = to_string(feature_set) + "-" + (classifier == ClassifierKind::Lda ? "lda" : "knn" + std::to_string(k));
  return reduction ? s + "-reduced" : s;
}

void ExperimentConfig::validate() const {
  if (protocol == ExperimentProtocol::SessionReplay) {
    if (session.empty() || checkpoint.empty()) throw ConfigError("session-replay needs 'session' and 'checkpoint'");
    return;
  }
  if (cycles < 1 || cycles > 4) throw ConfigError("cycles must lie in 1..4");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (stride < 1) throw ConfigError("stride must be at least 1");
  if (transfer && source_checkpoint.empty()) throw ConfigError("transfer=true requires 'source_checkpoint'");
  if (transfer && model.kind != ModelConfig::Kind::ConvNet) throw ConfigError("transfer needs a convnet model");
  if (protocol == ExperimentProtocol::OutOfSample && gesture_subset.size() < 2)
    throw ConfigError("out-of-sample protocol needs a gesture subset of at least 2 labels");
  if (protocol == ExperimentProtocol::OutOfSample &&
      (base_protocol != ExperimentProtocol::MyoEval && base_protocol != ExperimentProtocol::NinaPro))
    throw ConfigError("out-of-sample base protocol must be myo-eval or ninapro");
  if (protocol == ExperimentProtocol::DimReduction && model.kind != ModelConfig::Kind::Features)
    throw ConfigError("dim-reduction compares feature classifiers; model.kind must be 'features'");
  if (model.kind == ModelConfig::Kind::Features && model.classifier == ClassifierKind::Knn && model.k < 1)
    throw ConfigError("knn needs k >= 1");
  if (train.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (train.max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (train.patience_epochs < 1) throw ConfigError("patience_epochs must be at least 1");
  if (!(train.validation_fraction > 0.0 && train.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0,1)");
  if (train.learning_rate && !(*train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (model.dropout && (*model.dropout < 0.0 || *model.dropout >= 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (augmentation) augmentation->validate();
}

json ExperimentConfig::to_json() const {
  json m;
  if (model.kind == ModelConfig::Kind::ConvNet) {
    m = {{"kind", "convnet"}, {"architecture", to_string(model.architecture)}, {"mc_passes", model.mc_passes}};
    if (model.widths) m["widths"] = *model.widths;
    if (model.dropout) m["dropout"] = *model.dropout;
    if (model.channels) m["channels"] = *model.channels;
  } else {
    m = {{"kind", "features"},
         {"feature_set", to_string(model.feature_set)},
         {"classifier", model.classifier == ClassifierKind::Lda ? "lda" : "knn"},
         {"k", model.k},
         {"reduction", model.reduction}};
  }
  json t = {{"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience_epochs", train.patience_epochs},
            {"validation_fraction", train.validation_fraction}};
  if (train.learning_rate) t["learning_rate"] = *train.learning_rate;
  json j = {{"protocol", to_string(protocol)},
            {"cycles", cycles},
            {"model", m},
            {"transfer", transfer},
            {"single_stream", single_stream},
            {"seeds", seeds},
            {"subjects", subjects},
            {"stride", stride},
            {"train", t},
            {"dataset", dataset.string()},
            {"pretrain_dataset", pretrain_dataset.string()},
            {"source_checkpoint", source_checkpoint.string()},
            {"out", out.string()},
            {"save_checkpoints", save_checkpoints},
            {"session", session.string()},
            {"checkpoint", checkpoint.string()},
            {"skip_first_second", skip_first_second}};
  if (protocol == ExperimentProtocol::OutOfSample) {
    j["gesture_subset"] = gesture_subset;
    j["base_protocol"] = to_string(base_protocol);
  }
  if (align) j["align"] = *align;
  if (augmentation)
    j["augmentation"] = {{"technique", to_string(augmentation->technique)},
                         {"fatigue_probability", augmentation->fatigue_probability},
                         {"fatigue_fraction", augmentation->fatigue_fraction},
                         {"displacement_fraction", augmentation->displacement_fraction},
                         {"snr_db", augmentation->snr_db},
                         {"multiplier", augmentation->multiplier},
                         {"seed", augmentation->seed}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    get_strict(j,
               {"protocol", "cycles", "repetitions", "gesture_subset", "base_protocol", "model", "transfer",
                "single_stream", "align", "seeds", "subjects", "stride", "train", "augmentation", "dataset",
                "pretrain_dataset", "source_checkpoint", "out", "save_checkpoints", "session", "checkpoint",
                "skip_first_second"},
               "experiment config");
    c.protocol = parse_protocol(j.value("protocol", std::string("myo-eval")));
    c.cycles = j.value("cycles", j.value("repetitions", 4));
    c.gesture_subset = j.value("gesture_subset", std::vector<int>{});
    if (j.contains("base_protocol")) c.base_protocol = parse_protocol(j.at("base_protocol").get<std::string>());
    if (j.contains("model")) {
      const json& m = get_strict(j.at("model"),
                                 {"kind", "architecture", "widths", "dropout", "channels", "mc_passes",
                                  "feature_set", "classifier", "k", "reduction"},
                                 "model");
      const std::string kind = m.value("kind", std::string("convnet"));
      if (kind == "convnet") {
        c.model.kind = ModelConfig::Kind::ConvNet;
        c.model.architecture = parse_architecture(m.value("architecture", std::string("cwt")));
        if (m.contains("widths")) c.model.widths = m.at("widths").get<std::vector<std::size_t>>();
        if (m.contains("dropout")) c.model.dropout = m.at("dropout").get<double>();
        if (m.contains("channels")) c.model.channels = m.at("channels").get<std::vector<int>>();
        c.model.mc_passes = m.value("mc_passes", 0);
      } else if (kind == "features") {
        c.model.kind = ModelConfig::Kind::Features;
        c.model.feature_set = parse_feature_set(m.value("feature_set", std::string("TD")));
        const std::string cl = m.value("classifier", std::string("lda"));
        if (cl != "lda" && cl != "knn") throw ConfigError("classifier must be 'lda' or 'knn'");
        c.model.classifier = cl == "lda" ? ClassifierKind::Lda : ClassifierKind::Knn;
        c.model.k = m.value("k", std::size_t{1});
        c.model.reduction = m.value("reduction", false);
      } else {
        throw ConfigError("model.kind must be 'convnet' or 'features'");
      }
    }
    c.transfer = j.value("transfer", false);
    c.single_stream = j.value("single_stream", false);
    if (j.contains("align")) c.align = j.at("align").get<bool>();
    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      if (s.is_number_integer()) {
        const auto n = s.get<std::int64_t>();
        if (n < 1) throw ConfigError("seeds must be a positive count or a list");
        c.seeds.clear();
        for (std::int64_t i = 0; i < n; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        c.seeds = s.get<std::vector<std::uint64_t>>();
      }
    }
    c.subjects = j.value("subjects", std::vector<int>{});
    c.stride = j.value("stride", kDefaultStride);
    if (j.contains("train")) {
      const json& t = get_strict(j.at("train"),
                                 {"learning_rate", "batch_size", "max_epochs", "patience_epochs",
                                  "validation_fraction"},
                                 "train");
      if (t.contains("learning_rate")) c.train.learning_rate = t.at("learning_rate").get<double>();
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.patience_epochs = t.value("patience_epochs", c.train.patience_epochs);
      c.train.validation_fraction = t.value("validation_fraction", c.train.validation_fraction);
    }
    if (j.contains("augmentation")) {
      const json& a = get_strict(j.at("augmentation"),
                                 {"technique", "fatigue_probability", "fatigue_fraction", "displacement_fraction",
                                  "snr_db", "multiplier", "seed"},
                                 "augmentation");
      AugmentationConfig ac;
      ac.technique = parse_augmentation(a.value("technique", std::string("sliding-window")));
      ac.fatigue_probability = a.value("fatigue_probability", ac.fatigue_probability);
      ac.fatigue_fraction = a.value("fatigue_fraction", ac.fatigue_fraction);
      ac.displacement_fraction = a.value("displacement_fraction", ac.displacement_fraction);
      ac.snr_db = a.value("snr_db", ac.snr_db);
      ac.multiplier = a.value("multiplier", ac.multiplier);
      ac.seed = a.value("seed", ac.seed);
      c.augmentation = ac;
    }
    c.dataset = j.value("dataset", std::string());
    c.pretrain_dataset = j.value("pretrain_dataset", std::string());
    c.source_checkpoint = j.value("source_checkpoint", std::string());
    c.out = j.value("out", std::string());
    c.save_checkpoints = j.value("save_checkpoints", false);
    c.session = j.value("session", std::string());
    c.checkpoint = j.value("checkpoint", std::string());
    c.skip_first_second = j.value("skip_first_second", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return from_json(j);
}

// ----------------------------------------------------------- data source

MemoryDataSource::MemoryDataSource(std::vector<EmgRecording> recordings) : recordings_(std::move(recordings)) {
  std::stable_sort(recordings_.begin(), recordings_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.round, a.cycle, a.gesture) < std::tie(b.subject_id, b.round, b.cycle, b.gesture);
  });
}

std::vector<EmgRecording> MemoryDataSource::catalog() {
  std::vector<EmgRecording> out = recordings_;
  for (auto& r : out)
    for (auto& ch : r.samples) ch.clear();
  return out;
}

std::vector<EmgRecording> MemoryDataSource::fetch(int subject, const RecordingSelector& selector, RunStage) {
  std::vector<EmgRecording> out;
  for (const auto& r : recordings_)
    if (r.subject_id == subject && selector.matches(r)) out.push_back(r);
  return out;
}

std::string MemoryDataSource::content_hash() {
  std::string bytes;
  for (const auto& r : recordings_) {
    bytes += std::to_string(r.subject_id) + "/" + std::to_string(r.round) + "/" + std::to_string(r.cycle) + "/" +
             std::to_string(r.gesture) + ":";
    for (const auto& ch : r.samples)
      for (int v : ch) bytes.push_back(static_cast<char>(v));
  }
  return fnv1a_hex(bytes);
}

std::unique_ptr<DataSource> open_dataset(const std::filesystem::path& root) {
  return std::make_unique<MemoryDataSource>(load_dataset(root));
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- report

void MethodResult::summarize() {
  std::vector<double> cells;
  for (const auto& row : accuracy) cells.insert(cells.end(), row.begin(), row.end());
  mean = 0.0;
  pooled_sd = 0.0;
  if (cells.empty()) return;
  mean = std::accumulate(cells.begin(), cells.end(), 0.0) / static_cast<double>(cells.size());
  if (cells.size() > 1) {
    double ss = 0.0;
    for (double v : cells) ss += (v - mean) * (v - mean);
    pooled_sd = std::sqrt(ss / static_cast<double>(cells.size() - 1));
  }
}

json RunReport::to_json() const {
  json methods_json = json::array();
  for (const auto& m : methods)
    methods_json.push_back({{"method", m.method}, {"accuracy", m.accuracy}, {"mean", m.mean}, {"pooled_sd", m.pooled_sd}});
  return {{"protocol", protocol},
          {"cycles", cycles},
          {"subjects", subjects},
          {"seeds", seeds},
          {"methods", methods_json},
          {"pooled_sd_definition", "sample standard deviation over every (subject, seed) accuracy cell"},
          {"wall_clock_seconds", wall_clock_seconds},
          {"config", config},
          {"input_hash", input_hash},
          {"warnings", warnings}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  try {
    r.protocol = j.at("protocol").get<std::string>();
    r.cycles = j.at("cycles").get<int>();
    r.subjects = j.at("subjects").get<std::vector<int>>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const json& m : j.at("methods")) {
      MethodResult mr;
      mr.method = m.at("method").get<std::string>();
      mr.accuracy = m.at("accuracy").get<std::vector<std::vector<double>>>();
      mr.summarize();
      r.methods.push_back(std::move(mr));
    }
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    r.config = j.value("config", json::object());
    r.input_hash = j.value("input_hash", std::string());
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
  return r;
}

std::string RunReport::accuracy_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "subject,seed,method,accuracy\n";
  for (const auto& m : methods)
    for (std::size_t s = 0; s < subjects.size(); ++s)
      for (std::size_t k = 0; k < seeds.size(); ++k)
        os << subjects[s] << ',' << seeds[k] << ',' << m.method << ',' << m.accuracy[s][k] << '\n';
  return os.str();
}

void write_run_report(const RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "report.json") << report.to_json().dump(2) << '\n';
  std::ofstream(out_dir / "accuracy.csv") << report.accuracy_csv();
}

// ---------------------------------------------------------------- runner

RunReport run_experiment(const ExperimentConfig& cfg, DataSource& data) {
  cfg.validate();
  if (cfg.protocol == ExperimentProtocol::SessionReplay)
    throw ConfigError("session-replay runs through the replay command");
  const auto t0 = std::chrono::steady_clock::now();

  RunReport rep;
  rep.protocol = to_string(cfg.protocol);
  rep.cycles = cfg.cycles;
  rep.seeds = cfg.seeds;
  rep.config = cfg.to_json();

  const auto catalog = in_stage("catalog", -1, [&] { return data.catalog(); });
  rep.subjects = in_stage("catalog", -1, [&] { return subject_ids(catalog, cfg.subjects); });
  rep.input_hash = fnv1a_hex(rep.config.dump() + data.content_hash());
  const Protocol proto = make_protocol(cfg);
  const bool oos = cfg.protocol == ExperimentProtocol::OutOfSample;
  std::size_t num_classes = oos ? cfg.gesture_subset.size() : 0;
  if (!oos)
    for (const auto& r : catalog) num_classes = std::max(num_classes, static_cast<std::size_t>(r.gesture + 1));

  std::optional<SourceNetwork> source;
  if (cfg.transfer) {
    source = in_stage("load-source", -1, [&] { return load_source(cfg.source_checkpoint); });
    if (source->spec.name != cfg.model.architecture)
      throw ConfigError("source checkpoint holds a " + to_string(source->spec.name) + " network, config asks for " +
                        to_string(cfg.model.architecture));
  }
  const bool align = cfg.align.value_or(cfg.transfer);
  if (cfg.transfer && !align) rep.warnings.push_back("transfer run without channel alignment");

  std::vector<ModelConfig> models{cfg.model};
  if (cfg.protocol == ExperimentProtocol::DimReduction) {
    models[0].reduction = false;
    models.push_back(cfg.model);
    models[1].reduction = true;
  }
  for (const auto& m : models) {
    MethodResult mr;
    mr.method = m.name() + (cfg.transfer ? "+transfer" : "");
    if (cfg.augmentation) mr.method += "+" + to_string(cfg.augmentation->technique);
    rep.methods.push_back(mr);
  }

  ActivationProfile reference;
  bool have_reference = false;
  if (align && source && !source->reference_profile.empty()) {
    reference = source->reference_profile;
    have_reference = true;
  } else if (align && source) {
    rep.warnings.push_back("source checkpoint has no alignment reference; using the first subject");
  }

  const auto write_partial = [&] {
    if (cfg.out.empty()) return;
    for (auto& m : rep.methods) m.summarize();
    std::filesystem::create_directories(cfg.out);
    std::ofstream(cfg.out / "partial_report.json") << rep.to_json().dump(2) << '\n';
  };

  try {
    for (int subject : rep.subjects) {
      const auto sub_catalog = of_subject(catalog, subject);
      const ProtocolSelectors sel = in_stage("protocol", subject, [&] { return resolve_protocol(proto, sub_catalog); });
      std::vector<EmgRecording> train_recs =
          in_stage("load", subject, [&] { return data.fetch(subject, sel.train, RunStage::Train); });
      int shift = 0;
      if (align) {
        shift = in_stage("align", subject, [&] {
          if (!have_reference) {
            reference = full_profile(train_recs);
            have_reference = true;
            return 0;
          }
          return fit_shift(reference, train_recs);
        });
      }
      const std::vector<int> subset = oos ? cfg.gesture_subset : std::vector<int>{};
      train_recs = relabeled(shifted(std::move(train_recs), shift), subset);
      const std::vector<Window> train_windows =
          in_stage("window", subject, [&] { return windows_of(train_recs, cfg.stride); });
      std::vector<Window> val_windows;
      if (sel.has_validation)
        val_windows = in_stage("load", subject, [&] {
          return windows_of(relabeled(shifted(data.fetch(subject, sel.validation, RunStage::Validate), shift), subset),
                            cfg.stride);
        });
      std::optional<std::vector<Window>> test_windows;
      auto test = [&]() -> const std::vector<Window>& {
        if (!test_windows)
          test_windows = in_stage("load", subject, [&] {
            return windows_of(relabeled(shifted(data.fetch(subject, sel.test, RunStage::Evaluate), shift), subset),
                              cfg.stride);
          });
        return *test_windows;
      };

      for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const ModelConfig& model = models[mi];
        std::vector<double> row;
        for (std::uint64_t seed : cfg.seeds) {
          std::vector<Window> tw = train_windows;
          if (cfg.augmentation) {
            tw = in_stage("augment", subject, [&] {
              DatasetSplit s;
              s.train = train_windows;
              s.train_sources = train_recs;
              s.stride = cfg.stride;
              AugmentationConfig ac = *cfg.augmentation;
              ac.seed ^= seed * 0x9e3779b97f4a7c15ULL;
              return augment_dataset(s, ac).train;
            });
          }
          double acc = 0.0;
          if (model.kind == ModelConfig::Kind::Features) {
            acc = in_stage("train", subject, [&] {
              std::size_t degenerate = 0;
              FeatureClassifier clf;
              clf.kind = model.classifier;
              clf.k = model.k;
              clf.reduction = model.reduction;
              clf.fit(feature_matrix(tw, model.feature_set, &degenerate), labels_of(tw));
              const auto& te = test();
              const auto pred = clf.predict(feature_matrix(te, model.feature_set, nullptr));
              if (degenerate > 0)
                rep.warnings.push_back("subject " + std::to_string(subject) + ": " + std::to_string(degenerate) +
                                       " training windows had degenerate features");
              if (clf.regularized())
                rep.warnings.push_back("subject " + std::to_string(subject) + ": LDA covariance regularised");
              return nn::accuracy(pred, labels_of(te));
            });
          } else {
            acc = in_stage("train", subject, [&] {
              const ArchitectureSpec spec = convnet_spec(model, num_classes, seed);
              const nn::LabeledSet tr = make_labeled_set(spec, tw);
              const nn::LabeledSet va = make_labeled_set(spec, val_windows);
              const nn::LabeledSet* vp = sel.has_validation ? &va : nullptr;
              const nn::Mode mode = model.mc_passes > 0 ? nn::Mode::MonteCarlo : nn::Mode::Eval;
              const std::filesystem::path ckpt = cfg.out / "checkpoints" /
                                                 ("subject_" + std::to_string(subject) + "_seed_" +
                                                  std::to_string(seed) + ".json");
              const json extra = {{"subject", subject},
                                  {"seed", seed},
                                  {"alignment_shift", shift},
                                  {"experiment", cfg.to_json()}};
              if (source) {
                TargetNetwork t = build_target(*source, second_seed(seed), num_classes, kTargetDropout,
                                               cfg.single_stream);
                train_target(t, tr, train_config(cfg.train, spec.learning_rate_default(), seed), vp);
                if (cfg.save_checkpoints) save_target(ckpt, t, extra);
                return nn::accuracy(t, make_labeled_set(spec, test()), mode, model.mc_passes, seed);
              }
              nn::Network net = build_network(spec);
              nn::train(net, tr, train_config(cfg.train, spec.learning_rate_default(), seed), vp);
              nn::finalize_bn(net, tr);
              if (cfg.save_checkpoints) nn::save_checkpoint(ckpt, "network", spec.to_json(), net, extra);
              return nn::accuracy(net, make_labeled_set(spec, test()), mode, model.mc_passes, seed);
            });
          }
          row.push_back(acc);
        }
        rep.methods[mi].accuracy.push_back(row);
      }
    }
  } catch (...) {
    write_partial();
    throw;
  }
  for (auto& m : rep.methods) m.summarize();
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.empty()) throw ConfigError("config needs a 'dataset' path");
  auto data = in_stage("load", -1, [&] { return open_dataset(cfg.dataset); });
  return run_experiment(cfg, *data);
}

std::filesystem::path run_pretrain(const ExperimentConfig& cfg, DataSource& data) {
  cfg.validate();
  if (cfg.model.kind != ModelConfig::Kind::ConvNet) throw ConfigError("pretraining needs a convnet model");
  const auto catalog = data.catalog();
  const auto subjects = subject_ids(catalog, cfg.subjects);
  const Protocol proto = make_protocol(cfg);
  std::size_t num_classes = 0;
  for (const auto& r : catalog) num_classes = std::max(num_classes, static_cast<std::size_t>(r.gesture + 1));

  ActivationProfile reference;
  std::vector<Window> windows;
  for (int subject : subjects) {
    const auto sel = in_stage("protocol", subject, [&] { return resolve_protocol(proto, of_subject(catalog, subject)); });
    auto recs = data.fetch(subject, sel.train, RunStage::Train);
    const int shift = in_stage("align", subject, [&] {
      if (reference.empty()) {
        reference = full_profile(recs);
        return 0;
      }
      return fit_shift(reference, recs);
    });
    const auto w = windows_of(shifted(std::move(recs), shift), cfg.stride);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const std::uint64_t seed = cfg.seeds.front();
  ArchitectureSpec spec = convnet_spec(cfg.model, num_classes, seed);
  spec.dropout = cfg.model.dropout.value_or(kPretrainDropout);
  SourceNetwork src = in_stage("pretrain", -1, [&] {
    return pretrain(spec, make_labeled_set(spec, windows), train_config(cfg.train, spec.learning_rate_default(), seed));
  });
  src.reference_profile = reference;
  std::filesystem::path path = cfg.source_checkpoint;
  if (path.empty()) path = (cfg.out.empty() ? std::filesystem::path(".") : cfg.out) / "source_network.json";
  save_source(path, src);
  return path;
}

std::filesystem::path run_pretrain(const ExperimentConfig& cfg) {
  const auto root = cfg.pretrain_dataset.empty() ? cfg.dataset : cfg.pretrain_dataset;
  if (root.empty()) throw ConfigError("pretraining needs 'pretrain_dataset' or 'dataset'");
  auto data = in_stage("load", -1, [&] { return open_dataset(root); });
  return run_pretrain(cfg, *data);
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const json doc = nn::read_checkpoint(checkpoint);
  LoadedModel out;
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "network") {
    out.spec = ArchitectureSpec::from_json(doc.at("architecture"));
    auto net = std::make_unique<nn::Network>(build_network(out.spec));
    nn::model_state_from_json(*net, doc.at("state"));
    out.model = std::move(net);
  } else if (kind == "target") {
    auto t = std::make_unique<TargetNetwork>(load_target(checkpoint));
    out.spec = t->second_spec();
    out.model = std::move(t);
  } else {
    throw DataError(checkpoint.string() + ": unknown checkpoint kind '" + kind + "'");
  }
  if (doc.contains("subject")) {
    out.subject = doc.at("subject").get<int>();
  } else {
    std::vector<nn::BatchNorm*> bns = out.model->batch_norms();
    if (auto* t = dynamic_cast<TargetNetwork*>(out.model.get())) bns = t->second().batch_norms();
    if (!bns.empty() && !bns.front()->bank().empty()) out.subject = bns.front()->bank().begin()->first;
  }
  return out;
}

double run_evaluate(const ExperimentConfig& cfg, DataSource& data) {
  if (cfg.checkpoint.empty()) throw ConfigError("evaluate needs a 'checkpoint'");
  LoadedModel m = in_stage("load-model", -1, [&] { return load_model(cfg.checkpoint); });
  const json doc = nn::read_checkpoint(cfg.checkpoint);
  const int shift = doc.value("alignment_shift", 0);
  const auto catalog = data.catalog();
  const auto sel = in_stage("protocol", m.subject,
                            [&] { return resolve_protocol(make_protocol(cfg), of_subject(catalog, m.subject)); });
  const std::vector<int> subset =
      cfg.protocol == ExperimentProtocol::OutOfSample ? cfg.gesture_subset : std::vector<int>{};
  const auto test = windows_of(
      relabeled(shifted(data.fetch(m.subject, sel.test, RunStage::Evaluate), shift), subset), cfg.stride);
  const nn::Mode mode = cfg.model.mc_passes > 0 ? nn::Mode::MonteCarlo : nn::Mode::Eval;
  return in_stage("evaluate", m.subject, [&] {
    return nn::accuracy(*m.model, make_labeled_set(m.spec, test), mode, cfg.model.mc_passes, cfg.seeds.front());
  });
}

}  // namespace emgtl
