#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "emgtl/nn/tensor.hpp"

namespace emgtl::nn {

enum class Mode {
  Train,       // batch statistics, stochastic dropout
  Eval,        // stored statistics, dropout as identity (inverted dropout)
  MonteCarlo,  // stored statistics, stochastic dropout
};

class BatchNorm;

struct ForwardContext {
  Mode mode = Mode::Eval;
  int subject = 0;
  std::mt19937_64* rng = nullptr;  // required whenever dropout is stochastic
  BatchNorm* collect = nullptr;  // finalize pass: this layer accumulates input moments
};

/// Learnable tensor with its gradient and ADAM moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool frozen = false;
  bool batch_norm = false;  // gamma/beta of a BN layer

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool bn = false)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), adam_m(value.shape()),
        adam_v(value.shape()), batch_norm(bn) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;  // per example, no batch axis
  virtual Tensor forward(const Tensor& x, ForwardContext& ctx) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Projection applied after each optimiser step.
  virtual void after_update() {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
         std::mt19937_64& rng);
  std::string_view kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  std::size_t in_channels_, out_channels_, kernel_h_, kernel_w_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng);
  std::string_view kind() const override { return "fully-connected"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  std::size_t in_features_, out_features_;
  Parameter weight_, bias_;
  Tensor input_;
};

/// Per-feature (rank 2) or per-channel (rank 4) normalisation with one
/// statistics entry per subject and shared gamma/beta.
class BatchNorm final : public Layer {
 public:
  struct Stats {
    std::vector<double> mean;
    std::vector<double> var;
  };

  explicit BatchNorm(std::size_t features, double momentum = 0.1, double eps = 1e-5);
  std::string_view kind() const override { return "batch-norm"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  std::size_t features() const { return features_; }
  double eps() const { return eps_; }
  const std::map<int, Stats>& bank() const { return bank_; }
  std::map<int, Stats>& bank() { return bank_; }
  bool has_subject(int subject) const { return bank_.count(subject) != 0; }
  /// New entry for `subject`: mean of the existing entries, or (0, 1).
  void init_subject_from_mean(int subject);

  /// Train-mode passes normalise with the stored statistics and leave them
  /// untouched (single-stream ablation).
  void set_frozen_statistics(bool frozen) { frozen_statistics_ = frozen; }

  void begin_collect();
  void end_collect(int subject);

  const Parameter& gamma() const { return gamma_; }
  const Parameter& beta() const { return beta_; }

 private:
  std::size_t features_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  std::map<int, Stats> bank_;
  bool frozen_statistics_ = false;
  // finalize accumulators
  std::vector<double> sum_, sumsq_;
  double count_ = 0.0;
  // backward cache
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool batch_stats_ = false;
};

class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  std::string_view kind() const override { return "dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
  double rate() const { return rate_; }
  void set_rate(double rate) { rate_ = rate; }

 private:
  double rate_;
  std::vector<double> mask_;
};

/// x if x >= 0 else alpha_c * x, one alpha per channel/feature.
class PReLU final : public Layer {
 public:
  explicit PReLU(std::size_t channels, double init = 0.25);
  std::string_view kind() const override { return "prelu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&alpha_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<PReLU>(*this); }
  Parameter& alpha() { return alpha_; }

 private:
  std::size_t channels_;
  Parameter alpha_;
  Tensor input_;
};

/// (a/b) x for x >= 0, a (exp(x/b) - 1) otherwise; a, b > 0 per layer.
class PELU final : public Layer {
 public:
  static constexpr double kFloor = 1e-3;
  explicit PELU(double a = 1.0, double b = 1.0);
  std::string_view kind() const override { return "pelu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&a_, &b_}; }
  void after_update() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<PELU>(*this); }
  Parameter& a() { return a_; }
  Parameter& b() { return b_; }

 private:
  Parameter a_, b_;
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor input_;
};

/// Non-overlapping max pooling over the last two axes (floor).
class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::size_t pool_h, std::size_t pool_w) : pool_h_(pool_h), pool_w_(pool_w) {}
  std::string_view kind() const override { return "max-pool"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2d>(*this); }

 private:
  std::size_t pool_h_, pool_w_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

class Flatten final : public Layer {
 public:
  std::string_view kind() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override { return {shape_size(input)}; }
  Tensor forward(const Tensor& x, ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape input_shape_;
};

/// Multiplies channel/feature c by a learned coefficient s_c. One instance
/// may be applied to several branch tensors; each use gets its own slot.
class ScalarScale final : public Layer {
 public:
  explicit ScalarScale(std::size_t channels, double init = 1.0);
  std::string_view kind() const override { return "scalar-scale"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, ForwardContext&) override { return forward_slot(x, 0); }
  Tensor backward(const Tensor& grad_out) override { return backward_slot(grad_out, 0); }
  Tensor forward_slot(const Tensor& x, std::size_t slot);
  Tensor backward_slot(const Tensor& grad_out, std::size_t slot);
  std::vector<Parameter*> parameters() override { return {&scale_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ScalarScale>(*this); }
  Parameter& scale() { return scale_; }
  std::size_t channels() const { return channels_; }

 private:
  std::size_t channels_;
  Parameter scale_;
  std::vector<Tensor> inputs_;
};

/// Ordered chain of layers.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Shape output_shape(Shape input) const;
  Tensor forward(const Tensor& x, ForwardContext& ctx);
  Tensor backward(const Tensor& grad_out);
  std::vector<Parameter*> parameters();
  std::vector<Layer*> layers();
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Per-channel helpers shared by layers: channel axis is 1, inner size is the
// product of the remaining axes.
struct ChannelGeometry {
  std::size_t batch = 0, channels = 0, inner = 0;
};
ChannelGeometry channel_geometry(const Shape& shape);

}  // namespace emgtl::nn
