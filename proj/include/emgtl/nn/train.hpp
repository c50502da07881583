#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emgtl/nn/network.hpp"

namespace emgtl::nn {

/// Inputs (N, ...) with one label and one subject id per example.
struct LabeledSet {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<int> subjects;

  std::size_t size() const { return labels.size(); }
  LabeledSet subset(const std::vector<std::size_t>& rows) const;
  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax(const Tensor& logits);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update of every non-frozen parameter.
void adam_step(Model& model, double lr, const AdamConfig& cfg = {});

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  double anneal_factor = 5.0;
  int patience_epochs = 5;
  int max_epochs = 100;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;
  /// Consecutive decays without an improvement between them that end training.
  int decays_to_stop = 2;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
  bool decayed = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int decays = 0;
  int best_epoch = -1;
  double best_validation_loss = 0.0;
  std::vector<int> dropped_subjects;
  std::vector<std::string> warnings;
};

/// Subject-homogeneous mini-batches: each subject's examples are shuffled and
/// chunked, then batches are interleaved round-robin over subjects. Subjects
/// with fewer examples than one batch are skipped and reported in `dropped`.
std::vector<std::vector<std::size_t>> subject_batches(const std::vector<int>& subjects,
                                                      const std::vector<std::size_t>& rows, std::size_t batch_size,
                                                      std::mt19937_64& rng, std::vector<int>* dropped = nullptr);

/// Trains with early stopping and learning-rate annealing. Without an explicit
/// validation set, a random `validation_fraction` of `data` is held out.
/// Returns with the best-validation weights loaded.
TrainHistory train(Model& model, const LabeledSet& data, const TrainConfig& cfg,
                   const LabeledSet* validation = nullptr);

/// Recomputes every batch-norm layer's statistics for each subject present in
/// `data` from one pass per layer over that subject's examples, taking layers
/// in forward order so each one sees inputs normalised by its finalised
/// predecessors.
void finalize_bn(Model& model, const LabeledSet& data, std::size_t chunk = 256);

/// Class log-probabilities. Mode::MonteCarlo averages `mc_passes` stochastic
/// softmax outputs.
Tensor predict_log_proba(Model& model, const LabeledSet& data, Mode mode = Mode::Eval, int mc_passes = 1,
                         std::uint64_t seed = 0, std::size_t chunk = 256);
std::vector<int> predict(Model& model, const LabeledSet& data, Mode mode = Mode::Eval, int mc_passes = 1,
                         std::uint64_t seed = 0);
double accuracy(Model& model, const LabeledSet& data, Mode mode = Mode::Eval, int mc_passes = 1,
                std::uint64_t seed = 0);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

}  // namespace emgtl::nn
