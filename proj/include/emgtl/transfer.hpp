#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "emgtl/architectures.hpp"
#include "emgtl/dataset.hpp"
#include "emgtl/nn/train.hpp"
#include <json.hpp>

namespace emgtl {

inline constexpr double kPretrainDropout = 0.35;
inline constexpr double kTargetDropout = 0.5;

/// Network trained over several subjects with one batch-norm bank each.
struct SourceNetwork {
  ArchitectureSpec spec;
  nn::Network network;
  std::vector<int> subjects;
  /// Activation profile new subjects are aligned against.
  std::vector<std::array<double, kChannels>> reference_profile;
  bool frozen = false;
};

/// Freezes every parameter except batch-norm gamma/beta.
void freeze_source(nn::Network& net);

/// Trains one shared network on subject-homogeneous batches, refits each
/// subject's batch-norm statistics and freezes the result. Subjects with
/// fewer examples than one batch are skipped (see history warnings).
SourceNetwork pretrain(const ArchitectureSpec& spec, const nn::LabeledSet& data, const nn::TrainConfig& cfg,
                       nn::TrainHistory* history = nullptr);

/// Frozen source network plus a PELU-only second network of the same shape.
/// The output of every tapped source stage, scaled per channel by a learned
/// coefficient vector, is added to the matching second-network stage output
/// (per branch, before fusion). Logits come from the second network's head.
class TargetNetwork final : public nn::Model {
 public:
  TargetNetwork(SourceNetwork source, nn::Network second, ArchitectureSpec second_spec, bool single_stream = false,
                std::optional<int> source_bank = std::nullopt);
  TargetNetwork(const TargetNetwork& other);
  TargetNetwork& operator=(const TargetNetwork&) = delete;

  nn::Shape input_shape() const override { return second_.input_shape(); }
  std::size_t num_classes() const override { return second_.num_classes(); }
  nn::Tensor forward(const nn::Tensor& x, nn::ForwardContext& ctx) override;
  nn::Tensor backward(const nn::Tensor& grad_logits) override;
  std::vector<nn::Parameter*> parameters() override;
  std::vector<nn::BatchNorm*> batch_norms() override;
  std::vector<nn::Layer*> all_layers() override;
  std::optional<int> bank_subject(const nn::BatchNorm* bn, int subject) const override;

  SourceNetwork& source() { return source_; }
  nn::Network& second() { return second_; }
  const ArchitectureSpec& second_spec() const { return second_spec_; }
  std::vector<nn::ScalarScale*> scalars();
  /// Bank the source network uses for the new subject.
  int source_bank() const { return source_bank_; }
  bool single_stream() const { return single_stream_; }
  void set_scalars(double value);

 private:
  SourceNetwork source_;
  nn::Network second_;
  ArchitectureSpec second_spec_;
  bool single_stream_;
  int source_bank_ = 0;
  std::vector<std::unique_ptr<nn::ScalarScale>> scalars_;  // one per tapped stage, nullptr otherwise
  std::vector<std::size_t> stream_counts_;  // streams entering each stage
};

/// Fresh PELU-only second network (seed `second_seed`), scalars at 1.0.
/// Dropout layers of both networks use `dropout`.
/// `num_classes` 0 keeps the source's class count.
TargetNetwork build_target(const SourceNetwork& source, std::uint64_t second_seed, std::size_t num_classes = 0,
                           double dropout = kTargetDropout, bool single_stream = false);

/// Trains second network, scalars and source batch-norm parameters, then
/// refits the batch-norm statistics on `data`.
nn::TrainHistory train_target(TargetNetwork& target, const nn::LabeledSet& data, const nn::TrainConfig& cfg,
                              const nn::LabeledSet* validation = nullptr);

/// FNV-1a over the bytes of every frozen parameter value.
std::uint64_t frozen_checksum(nn::Model& model);

void save_source(const std::filesystem::path& path, SourceNetwork& source);
SourceNetwork load_source(const std::filesystem::path& path);
void save_target(const std::filesystem::path& path, TargetNetwork& target,
                 const nlohmann::json& extra = nlohmann::json::object());
TargetNetwork load_target(const std::filesystem::path& path);

}  // namespace emgtl
