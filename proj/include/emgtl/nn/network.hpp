#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emgtl/nn/layers.hpp"

namespace emgtl::nn {

/// Anything the training loop can drive.
class Model {
 public:
  virtual ~Model() = default;
  virtual Shape input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual Tensor forward(const Tensor& x, ForwardContext& ctx) = 0;
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& grad_logits) = 0;
  /// Every parameter with a unique qualified name, in a fixed order.
  virtual std::vector<Parameter*> parameters() = 0;
  /// Batch-norm layers in an order where every layer comes after the layers feeding it.
  virtual std::vector<BatchNorm*> batch_norms() = 0;
  virtual std::vector<Layer*> all_layers() = 0;
  /// Bank entry that `bn` uses for examples of `subject`; nullopt when the
  /// layer's statistics are fixed and must not be refitted.
  virtual std::optional<int> bank_subject(const BatchNorm*, int subject) const { return subject; }

  void zero_grad();
  void after_update();

  std::int64_t optimizer_step = 0;
};

/// One depth level of a multi-branch network. Each branch owns its weights.
struct Stage {
  std::string name;
  std::vector<Sequential> branches;
  bool fuse_after = false;  // sum streams pairwise (0+1, 2+3, ...) after this stage
  bool tap = false;  // exposed to sum connections in a target network
};

/// Slow-fusion network: the input is split into `split` equal parts along
/// axis 1, each part flows through its own branch, and branches are merged by
/// element-wise summation at stages marked `fuse_after`.
class Network final : public Model {
 public:
  Network(Shape input_shape, std::size_t split, std::vector<Stage> stages, Sequential head);

  Shape input_shape() const override { return input_shape_; }
  std::size_t num_classes() const override { return num_classes_; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_logits) override;
  std::vector<Parameter*> parameters() override;
  std::vector<BatchNorm*> batch_norms() override;
  std::vector<Layer*> all_layers() override;

  // Stage-wise access used by the target network.
  std::size_t stage_count() const { return stages_.size(); }
  const Stage& stage(std::size_t i) const { return stages_.at(i); }
  std::size_t split() const { return split_; }
  /// Shape (per example) of each stream leaving stage i, before fusion.
  const Shape& stage_output_shape(std::size_t i) const { return stage_shapes_.at(i); }
  std::vector<Tensor> split_input(const Tensor& x) const;
  Tensor merge_input_grad(const std::vector<Tensor>& grads) const;
  std::vector<Tensor> stage_forward(std::size_t i, const std::vector<Tensor>& streams, ForwardContext& ctx);
  std::vector<Tensor> stage_backward(std::size_t i, const std::vector<Tensor>& grads);
  std::vector<Tensor> fuse(std::size_t i, std::vector<Tensor> streams) const;
  std::vector<Tensor> fuse_backward(std::size_t i, const std::vector<Tensor>& grads) const;
  Tensor head_forward(const Tensor& x, ForwardContext& ctx) { return head_.forward(x, ctx); }
  Tensor head_backward(const Tensor& g) { return head_.backward(g); }

  std::vector<BatchNorm*> stage_batch_norms(std::size_t i);
  std::vector<BatchNorm*> head_batch_norms();

 private:
  Shape input_shape_;
  std::size_t split_;
  std::vector<Stage> stages_;
  Sequential head_;
  std::vector<Shape> stage_shapes_;
  std::size_t num_classes_ = 0;
};

std::size_t parameter_count(Model& model);
std::vector<Parameter*> trainable_parameters(Model& model);

/// Copy of everything training can change except optimiser moments.
struct ModelState {
  std::vector<Tensor> values;
  std::vector<std::map<int, BatchNorm::Stats>> banks;
};
ModelState capture_state(Model& model);
void restore_state(Model& model, const ModelState& state);

}  // namespace emgtl::nn
