#include "emgtl/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "emgtl/errors.hpp"
#include "emgtl/nn/kernels.hpp"

namespace emgtl::nn {

namespace {

void require_rank(const Tensor& x, std::size_t rank, std::string_view who) {
  if (x.rank() != rank)
    throw DataError(std::string(who) + ": expected rank " + std::to_string(rank) + " input, got " +
                    shape_string(x.shape()));
}

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

ChannelGeometry channel_geometry(const Shape& shape) {
  if (shape.size() < 2) throw DataError("per-channel layer needs rank >= 2, got " + shape_string(shape));
  ChannelGeometry g;
  g.batch = shape[0];
  g.channels = shape[1];
  g.inner = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) g.inner *= shape[i];
  return g;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
               std::mt19937_64& rng)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_h_(kernel_h), kernel_w_(kernel_w),
      weight_("weight", he_normal({out_channels, in_channels, kernel_h, kernel_w},
                                  in_channels * kernel_h * kernel_w, rng)),
      bias_("bias", Tensor({out_channels})) {}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != in_channels_ || input[1] < kernel_h_ || input[2] < kernel_w_)
    throw ConfigError("conv2d " + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + " (" +
                      std::to_string(kernel_h_) + "x" + std::to_string(kernel_w_) + ") cannot take input " +
                      shape_string(input));
  return {out_channels_, input[1] - kernel_h_ + 1, input[2] - kernel_w_ + 1};
}

Tensor Conv2d::forward(const Tensor& x, ForwardContext&) {
  require_rank(x, 4, "conv2d");
  const Shape out = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  kernels::ConvShape s{x.dim(0), in_channels_, x.dim(2), x.dim(3), out_channels_, kernel_h_, kernel_w_};
  Tensor y({x.dim(0), out[0], out[1], out[2]});
  kernels::conv2d_forward(s, x.data(), weight_.value.data(), bias_.value.data(), y.data());
  input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  kernels::ConvShape s{x.dim(0), in_channels_, x.dim(2), x.dim(3), out_channels_, kernel_h_, kernel_w_};
  Tensor grad_in(x.shape());
  kernels::conv2d_backward_input(s, grad_out.data(), weight_.value.data(), grad_in.data());
  kernels::conv2d_backward_params(s, x.data(), grad_out.data(), weight_.grad.data(), bias_.grad.data());
  return grad_in;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng)
    : in_features_(in_features), out_features_(out_features),
      weight_("weight", he_normal({out_features, in_features}, in_features, rng)),
      bias_("bias", Tensor({out_features})) {}

Shape Dense::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != in_features_)
    throw ConfigError("fully-connected layer with " + std::to_string(in_features_) + " inputs cannot take " +
                      shape_string(input));
  return {out_features_};
}

Tensor Dense::forward(const Tensor& x, ForwardContext&) {
  require_rank(x, 2, "fully-connected");
  output_shape({x.dim(1)});
  kernels::DenseShape s{x.dim(0), in_features_, out_features_};
  Tensor y({x.dim(0), out_features_});
  kernels::dense_forward(s, x.data(), weight_.value.data(), bias_.value.data(), y.data());
  input_ = x;
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  kernels::DenseShape s{input_.dim(0), in_features_, out_features_};
  Tensor grad_in(input_.shape());
  kernels::dense_backward_input(s, grad_out.data(), weight_.value.data(), grad_in.data());
  kernels::dense_backward_params(s, input_.data(), grad_out.data(), weight_.grad.data(), bias_.grad.data());
  return grad_in;
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t features, double momentum, double eps)
    : features_(features), momentum_(momentum), eps_(eps), gamma_("gamma", Tensor({features}, 1.0), true),
      beta_("beta", Tensor({features}), true) {}

void BatchNorm::init_subject_from_mean(int subject) {
  Stats s{std::vector<double>(features_, 0.0), std::vector<double>(features_, 1.0)};
  if (!bank_.empty()) {
    std::fill(s.var.begin(), s.var.end(), 0.0);
    for (const auto& [id, st] : bank_)
      for (std::size_t f = 0; f < features_; ++f) {
        s.mean[f] += st.mean[f];
        s.var[f] += st.var[f];
      }
    const double n = static_cast<double>(bank_.size());
    for (std::size_t f = 0; f < features_; ++f) {
      s.mean[f] /= n;
      s.var[f] /= n;
    }
  }
  bank_[subject] = std::move(s);
}

void BatchNorm::begin_collect() {
  sum_.assign(features_, 0.0);
  sumsq_.assign(features_, 0.0);
  count_ = 0.0;
}

void BatchNorm::end_collect(int subject) {
  if (count_ <= 0.0) throw DataError("batch-norm finalize saw no examples");
  Stats s{std::vector<double>(features_), std::vector<double>(features_)};
  for (std::size_t f = 0; f < features_; ++f) {
    s.mean[f] = sum_[f] / count_;
    s.var[f] = std::max(0.0, sumsq_[f] / count_ - s.mean[f] * s.mean[f]);
  }
  bank_[subject] = std::move(s);
  sum_.clear();
  sumsq_.clear();
  count_ = 0.0;
}

Tensor BatchNorm::forward(const Tensor& x, ForwardContext& ctx) {
  const ChannelGeometry g = channel_geometry(x.shape());
  if (g.channels != features_)
    throw DataError("batch-norm over " + std::to_string(features_) + " features got " + shape_string(x.shape()));
  const double m = static_cast<double>(g.batch * g.inner);

  std::vector<double> mean(features_), var(features_);
  auto batch_moments = [&] {
    for (std::size_t c = 0; c < features_; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* p = x.data() + (n * g.channels + c) * g.inner;
        for (std::size_t i = 0; i < g.inner; ++i) s += p[i];
      }
      const double mu = s / m;
      double v = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* p = x.data() + (n * g.channels + c) * g.inner;
        for (std::size_t i = 0; i < g.inner; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      mean[c] = mu;
      var[c] = v / m;
    }
  };

  if (ctx.collect == this) {
    for (std::size_t c = 0; c < features_; ++c)
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* p = x.data() + (n * g.channels + c) * g.inner;
        for (std::size_t i = 0; i < g.inner; ++i) {
          sum_[c] += p[i];
          sumsq_[c] += p[i] * p[i];
        }
      }
    count_ += m;
  }

  const bool train = ctx.mode == Mode::Train && !frozen_statistics_;
  batch_stats_ = train;
  if (train) {
    batch_moments();
    auto it = bank_.find(ctx.subject);
    if (it == bank_.end())
      it = bank_.emplace(ctx.subject, Stats{std::vector<double>(features_, 0.0), std::vector<double>(features_, 1.0)})
               .first;
    for (std::size_t c = 0; c < features_; ++c) {
      it->second.mean[c] = (1.0 - momentum_) * it->second.mean[c] + momentum_ * mean[c];
      it->second.var[c] = (1.0 - momentum_) * it->second.var[c] + momentum_ * var[c];
    }
  } else {
    auto it = bank_.find(ctx.subject);
    if (it != bank_.end()) {
      mean = it->second.mean;
      var = it->second.var;
    } else if (ctx.collect != nullptr) {
      batch_moments();  // layers downstream of the one being finalised
    } else {
      throw DataError("batch-norm has no statistics for subject " + std::to_string(ctx.subject));
    }
  }

  inv_std_.assign(features_, 0.0);
  for (std::size_t c = 0; c < features_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
  xhat_ = Tensor(x.shape());
  Tensor y(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < features_; ++c) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      const double ga = gamma_.value[c], be = beta_.value[c];
      for (std::size_t i = 0; i < g.inner; ++i) {
        const double h = (x[base + i] - mean[c]) * inv_std_[c];
        xhat_[base + i] = h;
        y[base + i] = ga * h + be;
      }
    }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const ChannelGeometry g = channel_geometry(grad_out.shape());
  const double m = static_cast<double>(g.batch * g.inner);
  Tensor grad_in(grad_out.shape());
  for (std::size_t c = 0; c < features_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) {
        sum_dy += grad_out[base + i];
        sum_dy_xhat += grad_out[base + i] * xhat_[base + i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double k = gamma_.value[c] * inv_std_[c];
    for (std::size_t n = 0; n < g.batch; ++n) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) {
        if (batch_stats_)
          grad_in[base + i] = k * (grad_out[base + i] - sum_dy / m - xhat_[base + i] * sum_dy_xhat / m);
        else
          grad_in[base + i] = k * grad_out[base + i];
      }
    }
  }
  return grad_in;
}

// --------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, ForwardContext& ctx) {
  const bool stochastic = rate_ > 0.0 && (ctx.mode == Mode::Train || ctx.mode == Mode::MonteCarlo);
  if (!stochastic) {
    mask_.assign(x.size(), 1.0);
    return x;
  }
  if (ctx.rng == nullptr) throw ConfigError("stochastic dropout needs a random generator");
  std::bernoulli_distribution keep(1.0 - rate_);
  const double scale = 1.0 / (1.0 - rate_);
  mask_.resize(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = keep(*ctx.rng) ? scale : 0.0;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask_[i];
  return g;
}

// ----------------------------------------------------------------- PReLU

PReLU::PReLU(std::size_t channels, double init) : channels_(channels), alpha_("alpha", Tensor({channels}, init)) {}

Tensor PReLU::forward(const Tensor& x, ForwardContext&) {
  const ChannelGeometry g = channel_geometry(x.shape());
  if (g.channels != channels_) throw DataError("prelu channel mismatch on " + shape_string(x.shape()));
  Tensor y(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) {
        const double v = x[base + i];
        y[base + i] = v >= 0.0 ? v : alpha_.value[c] * v;
      }
    }
  input_ = x;
  return y;
}

Tensor PReLU::backward(const Tensor& grad_out) {
  const ChannelGeometry g = channel_geometry(input_.shape());
  Tensor grad_in(input_.shape());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) {
        const double v = input_[base + i], d = grad_out[base + i];
        if (v >= 0.0) {
          grad_in[base + i] = d;
        } else {
          grad_in[base + i] = alpha_.value[c] * d;
          alpha_.grad[c] += v * d;
        }
      }
    }
  return grad_in;
}

// ------------------------------------------------------------------ PELU

PELU::PELU(double a, double b) : a_("a", Tensor({1}, a)), b_("b", Tensor({1}, b)) {}

Tensor PELU::forward(const Tensor& x, ForwardContext&) {
  const double a = a_.value[0], b = b_.value[0];
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = v >= 0.0 ? (a / b) * v : a * std::expm1(v / b);
  }
  input_ = x;
  return y;
}

Tensor PELU::backward(const Tensor& grad_out) {
  const double a = a_.value[0], b = b_.value[0];
  Tensor grad_in(input_.shape());
  double ga = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < input_.size(); ++i) {
    const double v = input_[i], d = grad_out[i];
    if (v >= 0.0) {
      grad_in[i] = d * a / b;
      ga += d * v / b;
      gb -= d * a * v / (b * b);
    } else {
      const double e = std::exp(v / b);
      grad_in[i] = d * (a / b) * e;
      ga += d * (e - 1.0);
      gb -= d * a * e * v / (b * b);
    }
  }
  a_.grad[0] += ga;
  b_.grad[0] += gb;
  return grad_in;
}

void PELU::after_update() {
  a_.value[0] = std::max(a_.value[0], kFloor);
  b_.value[0] = std::max(b_.value[0], kFloor);
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& x, ForwardContext&) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  input_ = x;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = input_[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

// ------------------------------------------------------------- MaxPool2d

Shape MaxPool2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[1] < pool_h_ || input[2] < pool_w_)
    throw ConfigError("max-pool " + std::to_string(pool_h_) + "x" + std::to_string(pool_w_) +
                      " cannot take input " + shape_string(input));
  return {input[0], input[1] / pool_h_, input[2] / pool_w_};
}

Tensor MaxPool2d::forward(const Tensor& x, ForwardContext&) {
  require_rank(x, 4, "max-pool");
  const Shape o = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t h = x.dim(2), w = x.dim(3), planes = x.dim(0) * x.dim(1);
  Tensor y({x.dim(0), o[0], o[1], o[2]});
  argmax_.assign(y.size(), 0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < o[1]; ++i)
      for (std::size_t j = 0; j < o[2]; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t di = 0; di < pool_h_; ++di)
          for (std::size_t dj = 0; dj < pool_w_; ++dj) {
            const std::size_t idx = p * h * w + (i * pool_h_ + di) * w + (j * pool_w_ + dj);
            if (x[idx] > best) {
              best = x[idx];
              arg = idx;
            }
          }
        const std::size_t out = (p * o[1] + i) * o[2] + j;
        y[out] = best;
        argmax_[out] = arg;
      }
  input_shape_ = x.shape();
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  Tensor g(input_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) g[argmax_[i]] += grad_out[i];
  return g;
}

// --------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, ForwardContext&) {
  input_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
}

Tensor Flatten::backward(const Tensor& grad_out) { return grad_out.reshaped(input_shape_); }

// ----------------------------------------------------------- ScalarScale

ScalarScale::ScalarScale(std::size_t channels, double init)
    : channels_(channels), scale_("scale", Tensor({channels}, init)) {}

Tensor ScalarScale::forward_slot(const Tensor& x, std::size_t slot) {
  const ChannelGeometry g = channel_geometry(x.shape());
  if (g.channels != channels_) throw DataError("scalar layer channel mismatch on " + shape_string(x.shape()));
  if (inputs_.size() <= slot) inputs_.resize(slot + 1);
  inputs_[slot] = x;
  Tensor y(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) y[base + i] = scale_.value[c] * x[base + i];
    }
  return y;
}

Tensor ScalarScale::backward_slot(const Tensor& grad_out, std::size_t slot) {
  const Tensor& x = inputs_.at(slot);
  const ChannelGeometry g = channel_geometry(x.shape());
  Tensor grad_in(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const std::size_t base = (n * g.channels + c) * g.inner;
      for (std::size_t i = 0; i < g.inner; ++i) {
        grad_in[base + i] = scale_.value[c] * grad_out[base + i];
        scale_.grad[c] += x[base + i] * grad_out[base + i];
      }
    }
  return grad_in;
}

// ------------------------------------------------------------ Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Shape Sequential::output_shape(Shape input) const {
  for (const auto& l : layers_) input = l->output_shape(input);
  return input;
}

Tensor Sequential::forward(const Tensor& x, ForwardContext& ctx) {
  Tensor y = x;
  for (auto& l : layers_) y = l->forward(y, ctx);
  return y;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (Parameter* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<Layer*> Sequential::layers() {
  std::vector<Layer*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

}  // namespace emgtl::nn
