#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgtl/architectures.hpp"
#include "emgtl/augmentation.hpp"
#include "emgtl/baselines.hpp"
#include "emgtl/dataset.hpp"
#include "emgtl/features.hpp"
#include "emgtl/nn/train.hpp"

namespace emgtl {

enum class ExperimentProtocol { MyoEval, NinaPro, OutOfSample, AugmentationAblation, DimReduction, SessionReplay };

std::string to_string(ExperimentProtocol p);
ExperimentProtocol parse_protocol(const std::string& text);

struct ModelConfig {
  enum class Kind { ConvNet, Features } kind = Kind::ConvNet;
  // convnet
  ArchitectureName architecture = ArchitectureName::Cwt;
  std::optional<std::vector<std::size_t>> widths;
  std::optional<double> dropout;
  std::optional<std::vector<int>> channels;  // raw-1d input channels
  int mc_passes = 0;  // 0 = deterministic evaluation
  // features
  FeatureSet feature_set = FeatureSet::TD;
  ClassifierKind classifier = ClassifierKind::Lda;
  std::size_t k = 1;
  bool reduction = false;

  std::string name() const;
};

struct TrainSettings {
  std::optional<double> learning_rate;  // architecture default when unset
  std::size_t batch_size = 128;
  int max_epochs = 100;
  int patience_epochs = 5;
  double validation_fraction = 0.10;
};

struct ExperimentConfig {
  ExperimentProtocol protocol = ExperimentProtocol::MyoEval;
  int cycles = 4;  // cycles (myo) or repetitions (ninapro)
  std::vector<int> gesture_subset;  // out-of-sample
  ExperimentProtocol base_protocol = ExperimentProtocol::NinaPro;  // out-of-sample
  ModelConfig model;
  bool transfer = false;
  bool single_stream = false;
  std::optional<bool> align;  // defaults to `transfer`
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<int> subjects;  // empty = all
  std::size_t stride = kDefaultStride;
  TrainSettings train;
  std::optional<AugmentationConfig> augmentation;
  std::filesystem::path dataset;
  std::filesystem::path pretrain_dataset;
  std::filesystem::path source_checkpoint;
  std::filesystem::path out;
  bool save_checkpoints = false;
  // session replay
  std::filesystem::path session;
  std::filesystem::path checkpoint;
  bool skip_first_second = true;

  /// Throws ConfigError on inconsistent settings, before any data is touched.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& file);
};

enum class RunStage { Catalog, Align, Train, Validate, Evaluate };
std::string to_string(RunStage s);

/// Where the runner gets recordings. Every sample access goes through
/// `fetch`, tagged with the stage that asked for it.
class DataSource {
 public:
  virtual ~DataSource() = default;
  /// Metadata of every recording (samples may be empty).
  virtual std::vector<EmgRecording> catalog() = 0;
  virtual std::vector<EmgRecording> fetch(int subject, const RecordingSelector& selector, RunStage stage) = 0;
  /// Hash of the data content, for run provenance.
  virtual std::string content_hash() = 0;
};

class MemoryDataSource : public DataSource {
 public:
  explicit MemoryDataSource(std::vector<EmgRecording> recordings);
  std::vector<EmgRecording> catalog() override;
  std::vector<EmgRecording> fetch(int subject, const RecordingSelector& selector, RunStage stage) override;
  std::string content_hash() override;

 protected:
  std::vector<EmgRecording> recordings_;
};

std::unique_ptr<DataSource> open_dataset(const std::filesystem::path& root);

struct MethodResult {
  std::string method;
  std::vector<std::vector<double>> accuracy;  // [subject][seed]
  double mean = 0.0;
  /// Sample standard deviation over all (subject, seed) cells.
  double pooled_sd = 0.0;

  void summarize();
};

struct RunReport {
  std::string protocol;
  int cycles = 0;
  std::vector<int> subjects;
  std::vector<std::uint64_t> seeds;
  std::vector<MethodResult> methods;  // two for dim-reduction (without, with)
  double wall_clock_seconds = 0.0;
  nlohmann::json config;
  std::string input_hash;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  /// subject,seed,method,accuracy rows.
  std::string accuracy_csv() const;
};

/// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

/// Errors are rethrown with the failing stage and subject prefixed.
RunReport run_experiment(const ExperimentConfig& cfg, DataSource& data);
RunReport run_experiment(const ExperimentConfig& cfg);
void write_run_report(const RunReport& report, const std::filesystem::path& out_dir);

/// Builds, trains and saves a source network over every subject of
/// `cfg.pretrain_dataset` (or `data`); returns the checkpoint path.
std::filesystem::path run_pretrain(const ExperimentConfig& cfg, DataSource& data);
std::filesystem::path run_pretrain(const ExperimentConfig& cfg);

/// Model restored from any checkpoint kind, ready for inference.
struct LoadedModel {
  std::unique_ptr<nn::Model> model;
  ArchitectureSpec spec;
  int subject = 0;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Accuracy of a checkpoint on the protocol's test recordings of its subject.
double run_evaluate(const ExperimentConfig& cfg, DataSource& data);

// ---- session replay --------------------------------------------------------

struct SessionSample {
  double timestamp = 0.0;
  int label = 0;
  std::array<int, kChannels> samples{};
};

/// CSV rows: timestamp,label,s0..s7 (no header).
std::vector<SessionSample> read_session_csv(const std::filesystem::path& file);

struct HoldAccuracy {
  std::size_t hold = 0;
  int label = 0;
  double start_timestamp = 0.0;
  std::size_t windows = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

/// Windows of a hold after optionally skipping its first second.
std::size_t replay_window_count(std::size_t hold_samples, bool skip_first_second, std::size_t stride = kDefaultStride);

/// A hold is a maximal run of rows with the same requested label. Windows are
/// classified for `subject`'s batch-norm bank after rotating by the shift.
std::vector<HoldAccuracy> run_session_replay(const std::vector<SessionSample>& session, nn::Model& model,
                                             const ArchitectureSpec& spec, int subject, bool skip_first_second = true,
                                             std::size_t stride = kDefaultStride, int alignment_shift = 0);
std::vector<HoldAccuracy> run_session_replay(const std::filesystem::path& session_file,
                                             const std::filesystem::path& checkpoint, bool skip_first_second = true);
std::string replay_csv(const std::vector<HoldAccuracy>& timeline);

// ---- reports ---------------------------------------------------------------

struct ComparisonReport {
  std::vector<std::string> methods;  // "<method>@<cycles>"
  std::vector<int> subjects;
  std::vector<std::vector<double>> table;  // [subject][method] mean over seeds
  std::vector<double> means;
  nlohmann::json tests;  // wilcoxon or friedman+holm results, empty for one method
};

ComparisonReport emit_report(const std::vector<RunReport>& reports);
void write_comparison(const ComparisonReport& report, const std::filesystem::path& out_dir);

}  // namespace emgtl
