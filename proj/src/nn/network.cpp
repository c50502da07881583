#include "emgtl/nn/network.hpp"

#include <algorithm>

#include "emgtl/errors.hpp"

namespace emgtl::nn {

namespace {

void append_batch_norms(Sequential& seq, std::vector<BatchNorm*>& out) {
  for (Layer* l : seq.layers())
    if (auto* bn = dynamic_cast<BatchNorm*>(l)) out.push_back(bn);
}

void qualify(std::vector<Parameter*>& params, std::size_t from, const std::string& prefix) {
  for (std::size_t i = from; i < params.size(); ++i) {
    const auto dot = params[i]->name.rfind('.');
    const std::string leaf = dot == std::string::npos ? params[i]->name : params[i]->name.substr(dot + 1);
    params[i]->name = prefix + std::to_string(i - from) + "." + leaf;
  }
}

}  // namespace

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

void Model::after_update() {
  for (Layer* l : all_layers()) l->after_update();
}

Network::Network(Shape input_shape, std::size_t split, std::vector<Stage> stages, Sequential head)
    : input_shape_(std::move(input_shape)), split_(split), stages_(std::move(stages)), head_(std::move(head)) {
  if (input_shape_.empty()) throw ConfigError("network input shape is empty");
  if (split_ == 0 || input_shape_[0] % split_ != 0)
    throw ConfigError("cannot split axis of size " + std::to_string(input_shape_[0]) + " into " +
                      std::to_string(split_) + " equal parts");
  Shape part = input_shape_;
  part[0] /= split_;
  std::size_t streams = split_;
  std::vector<Shape> shapes(streams, part);
  for (const Stage& st : stages_) {
    if (st.branches.size() != streams)
      throw ConfigError("stage " + st.name + " has " + std::to_string(st.branches.size()) + " branches for " +
                        std::to_string(streams) + " streams");
    for (std::size_t b = 0; b < streams; ++b) shapes[b] = st.branches[b].output_shape(shapes[b]);
    for (std::size_t b = 1; b < streams; ++b)
      if (shapes[b] != shapes[0])
        throw ConfigError("stage " + st.name + " branches disagree: " + shape_string(shapes[0]) + " vs " +
                          shape_string(shapes[b]));
    stage_shapes_.push_back(shapes[0]);
    if (st.fuse_after) {
      if (streams % 2 != 0) throw ConfigError("stage " + st.name + " fuses an odd number of streams");
      streams /= 2;
      shapes.resize(streams);
    }
  }
  if (streams != 1) throw ConfigError("network ends with " + std::to_string(streams) + " unfused streams");
  const Shape out = head_.output_shape(shapes[0]);
  if (out.size() != 1) throw ConfigError("network head must produce a flat vector, got " + shape_string(out));
  num_classes_ = out[0];
  // qualified, stable parameter names
  parameters();
}

std::vector<Tensor> Network::split_input(const Tensor& x) const {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1))
    throw DataError("network expects input (N," + shape_string(input_shape_).substr(1) + ", got " +
                    shape_string(x.shape()));
  if (split_ == 1) return {x};
  const std::size_t n = x.dim(0);
  const std::size_t per_example = x.size() / std::max<std::size_t>(n, 1);
  const std::size_t part = per_example / split_;
  Shape s = x.shape();
  s[1] /= split_;
  std::vector<Tensor> out(split_, Tensor(s));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < split_; ++b)
      std::copy_n(x.data() + i * per_example + b * part, part, out[b].data() + i * part);
  return out;
}

Tensor Network::merge_input_grad(const std::vector<Tensor>& grads) const {
  if (split_ == 1) return grads.at(0);
  const std::size_t n = grads[0].dim(0);
  const std::size_t part = grads[0].size() / std::max<std::size_t>(n, 1);
  Shape s = grads[0].shape();
  s[1] *= split_;
  Tensor out(s);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < split_; ++b)
      std::copy_n(grads[b].data() + i * part, part, out.data() + i * part * split_ + b * part);
  return out;
}

std::vector<Tensor> Network::stage_forward(std::size_t i, const std::vector<Tensor>& streams, ForwardContext& ctx) {
  Stage& st = stages_.at(i);
  std::vector<Tensor> out;
  out.reserve(streams.size());
  for (std::size_t b = 0; b < streams.size(); ++b) out.push_back(st.branches[b].forward(streams[b], ctx));
  return out;
}

std::vector<Tensor> Network::stage_backward(std::size_t i, const std::vector<Tensor>& grads) {
  Stage& st = stages_.at(i);
  std::vector<Tensor> out;
  out.reserve(grads.size());
  for (std::size_t b = 0; b < grads.size(); ++b) out.push_back(st.branches[b].backward(grads[b]));
  return out;
}

std::vector<Tensor> Network::fuse(std::size_t i, std::vector<Tensor> streams) const {
  if (!stages_.at(i).fuse_after) return streams;
  std::vector<Tensor> out;
  for (std::size_t b = 0; b + 1 < streams.size(); b += 2) {
    streams[b] += streams[b + 1];
    out.push_back(std::move(streams[b]));
  }
  return out;
}

std::vector<Tensor> Network::fuse_backward(std::size_t i, const std::vector<Tensor>& grads) const {
  if (!stages_.at(i).fuse_after) return grads;
  std::vector<Tensor> out;
  for (const Tensor& g : grads) {
    out.push_back(g);
    out.push_back(g);
  }
  return out;
}

Tensor Network::forward(const Tensor& x, ForwardContext& ctx) {
  std::vector<Tensor> streams = split_input(x);
  for (std::size_t i = 0; i < stages_.size(); ++i) streams = fuse(i, stage_forward(i, streams, ctx));
  return head_.forward(streams[0], ctx);
}

Tensor Network::backward(const Tensor& grad_logits) {
  std::vector<Tensor> grads{head_.backward(grad_logits)};
  for (std::size_t i = stages_.size(); i-- > 0;) grads = stage_backward(i, fuse_backward(i, grads));
  return merge_input_grad(grads);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (Stage& st : stages_)
    for (std::size_t b = 0; b < st.branches.size(); ++b) {
      const std::size_t from = out.size();
      for (Parameter* p : st.branches[b].parameters()) out.push_back(p);
      qualify(out, from, st.name + ".b" + std::to_string(b) + ".p");
    }
  const std::size_t from = out.size();
  for (Parameter* p : head_.parameters()) out.push_back(p);
  qualify(out, from, "head.p");
  return out;
}

std::vector<BatchNorm*> Network::stage_batch_norms(std::size_t i) {
  std::vector<BatchNorm*> out;
  for (Sequential& s : stages_.at(i).branches) append_batch_norms(s, out);
  return out;
}

std::vector<BatchNorm*> Network::head_batch_norms() {
  std::vector<BatchNorm*> out;
  append_batch_norms(head_, out);
  return out;
}

std::vector<BatchNorm*> Network::batch_norms() {
  std::vector<BatchNorm*> out;
  for (std::size_t i = 0; i < stages_.size(); ++i)
    for (BatchNorm* bn : stage_batch_norms(i)) out.push_back(bn);
  for (BatchNorm* bn : head_batch_norms()) out.push_back(bn);
  return out;
}

std::vector<Layer*> Network::all_layers() {
  std::vector<Layer*> out;
  for (Stage& st : stages_)
    for (Sequential& s : st.branches)
      for (Layer* l : s.layers()) out.push_back(l);
  for (Layer* l : head_.layers()) out.push_back(l);
  return out;
}

std::size_t parameter_count(Model& model) {
  std::size_t n = 0;
  for (Parameter* p : model.parameters()) n += p->value.size();
  return n;
}

std::vector<Parameter*> trainable_parameters(Model& model) {
  std::vector<Parameter*> out;
  for (Parameter* p : model.parameters())
    if (!p->frozen) out.push_back(p);
  return out;
}

ModelState capture_state(Model& model) {
  ModelState s;
  for (Parameter* p : model.parameters()) s.values.push_back(p->value);
  for (BatchNorm* bn : model.batch_norms()) s.banks.push_back(bn->bank());
  return s;
}

void restore_state(Model& model, const ModelState& state) {
  auto params = model.parameters();
  auto bns = model.batch_norms();
  if (params.size() != state.values.size() || bns.size() != state.banks.size())
    throw DataError("model state does not match the model structure");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = state.values[i];
  for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->bank() = state.banks[i];
}

}  // namespace emgtl::nn
