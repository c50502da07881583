#include "emgtl/transfer.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "emgtl/errors.hpp"
#include "emgtl/nn/checkpoint.hpp"

namespace emgtl {

using nlohmann::json;
using nn::BatchNorm;
using nn::Parameter;
using nn::Tensor;

namespace {

void set_dropout(nn::Model& model, double rate) {
  for (nn::Layer* l : model.all_layers())
    if (auto* d = dynamic_cast<nn::Dropout*>(l)) d->set_rate(rate);
}

json profile_json(const std::vector<std::array<double, kChannels>>& profile) {
  json j = json::array();
  for (const auto& row : profile) j.push_back(std::vector<double>(row.begin(), row.end()));
  return j;
}

std::vector<std::array<double, kChannels>> profile_from_json(const json& j) {
  std::vector<std::array<double, kChannels>> out;
  for (const json& row : j) {
    const auto v = row.get<std::vector<double>>();
    if (v.size() != kChannels) throw DataError("reference profile row must have 8 entries");
    std::array<double, kChannels> a{};
    std::copy(v.begin(), v.end(), a.begin());
    out.push_back(a);
  }
  return out;
}

}  // namespace

void freeze_source(nn::Network& net) {
  for (Parameter* p : net.parameters()) p->frozen = !p->batch_norm;
}

SourceNetwork pretrain(const ArchitectureSpec& spec, const nn::LabeledSet& data, const nn::TrainConfig& cfg,
                       nn::TrainHistory* history) {
  SourceNetwork src{spec, build_network(spec), {}, {}, false};
  nn::TrainHistory h = nn::train(src.network, data, cfg);
  std::set<int> ids(data.subjects.begin(), data.subjects.end());
  for (int id : h.dropped_subjects) ids.erase(id);
  src.subjects.assign(ids.begin(), ids.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (ids.count(data.subjects[i])) rows.push_back(i);
  nn::finalize_bn(src.network, data.subset(rows));
  freeze_source(src.network);
  src.frozen = true;
  if (history) *history = std::move(h);
  return src;
}

TargetNetwork::TargetNetwork(SourceNetwork source, nn::Network second, ArchitectureSpec second_spec,
                             bool single_stream, std::optional<int> source_bank)
    : source_(std::move(source)), second_(std::move(second)), second_spec_(std::move(second_spec)),
      single_stream_(single_stream) {
  nn::Network& s = source_.network;
  if (s.stage_count() != second_.stage_count() || s.split() != second_.split() ||
      s.input_shape() != second_.input_shape())
    throw ConfigError("source and second networks have different layouts");
  std::size_t streams = s.split();
  for (std::size_t i = 0; i < s.stage_count(); ++i) {
    if (s.stage(i).branches.size() != second_.stage(i).branches.size() ||
        s.stage(i).fuse_after != second_.stage(i).fuse_after ||
        s.stage_output_shape(i) != second_.stage_output_shape(i))
      throw ConfigError("cannot connect stage " + s.stage(i).name + ": source " +
                        nn::shape_string(s.stage_output_shape(i)) + " vs second " +
                        nn::shape_string(second_.stage_output_shape(i)));
    stream_counts_.push_back(streams);
    if (s.stage(i).tap)
      scalars_.push_back(std::make_unique<nn::ScalarScale>(s.stage_output_shape(i).at(0), 1.0));
    else
      scalars_.push_back(nullptr);
    if (s.stage(i).fuse_after) streams /= 2;
  }

  freeze_source(s);
  if (source_bank) {
    source_bank_ = *source_bank;
  } else {
    int top = source_.subjects.empty() ? -1 : *std::max_element(source_.subjects.begin(), source_.subjects.end());
    for (BatchNorm* bn : s.batch_norms())
      if (!bn->bank().empty()) top = std::max(top, bn->bank().rbegin()->first);
    source_bank_ = top + 1;
  }
  for (BatchNorm* bn : s.batch_norms()) {
    if (!bn->has_subject(source_bank_)) bn->init_subject_from_mean(source_bank_);
    if (single_stream_) {
      bn->set_frozen_statistics(true);
      for (Parameter* p : bn->parameters()) p->frozen = true;
    }
  }
}

TargetNetwork::TargetNetwork(const TargetNetwork& other)
    : nn::Model(other), source_(other.source_), second_(other.second_), second_spec_(other.second_spec_),
      single_stream_(other.single_stream_), source_bank_(other.source_bank_), stream_counts_(other.stream_counts_) {
  for (const auto& p : other.scalars_) scalars_.push_back(p ? std::make_unique<nn::ScalarScale>(*p) : nullptr);
}

Tensor TargetNetwork::forward(const Tensor& x, nn::ForwardContext& ctx) {
  nn::ForwardContext sctx = ctx;
  sctx.subject = source_bank_;
  nn::Network& src = source_.network;
  std::vector<Tensor> s = src.split_input(x);
  std::vector<Tensor> t = second_.split_input(x);
  for (std::size_t i = 0; i < src.stage_count(); ++i) {
    std::vector<Tensor> s_out = src.stage_forward(i, s, sctx);
    std::vector<Tensor> t_out = second_.stage_forward(i, t, ctx);
    if (scalars_[i])
      for (std::size_t b = 0; b < t_out.size(); ++b) t_out[b] += scalars_[i]->forward_slot(s_out[b], b);
    s = src.fuse(i, std::move(s_out));
    t = second_.fuse(i, std::move(t_out));
  }
  return second_.head_forward(t[0], ctx);
}

Tensor TargetNetwork::backward(const Tensor& grad_logits) {
  nn::Network& src = source_.network;
  const std::size_t n = grad_logits.dim(0);
  std::vector<Tensor> gt{second_.head_backward(grad_logits)};
  std::vector<Tensor> gs;
  for (std::size_t i = src.stage_count(); i-- > 0;) {
    std::vector<Tensor> gt_pre = second_.fuse_backward(i, gt);
    std::vector<Tensor> gs_pre;
    if (gs.empty()) {
      nn::Shape shape = src.stage_output_shape(i);
      shape.insert(shape.begin(), n);
      gs_pre.assign(stream_counts_[i], Tensor(shape));
    } else {
      gs_pre = src.fuse_backward(i, gs);
    }
    if (scalars_[i])
      for (std::size_t b = 0; b < gt_pre.size(); ++b) gs_pre[b] += scalars_[i]->backward_slot(gt_pre[b], b);
    gt = second_.stage_backward(i, gt_pre);
    gs = src.stage_backward(i, gs_pre);
  }
  Tensor gx = second_.merge_input_grad(gt);
  gx += src.merge_input_grad(gs);
  return gx;
}

std::vector<Parameter*> TargetNetwork::parameters() {
  std::vector<Parameter*> out;
  auto tag = [&](Parameter* p, const std::string& prefix) {
    if (p->name.rfind(prefix, 0) != 0) p->name = prefix + p->name;
    out.push_back(p);
  };
  for (Parameter* p : source_.network.parameters()) tag(p, "source.");
  for (Parameter* p : second_.parameters()) tag(p, "second.");
  for (std::size_t i = 0, k = 0; i < scalars_.size(); ++i)
    if (scalars_[i]) {
      Parameter& p = scalars_[i]->scale();
      p.name = "scalar.S" + std::to_string(++k) + ".scale";
      out.push_back(&p);
    }
  return out;
}

std::vector<BatchNorm*> TargetNetwork::batch_norms() {
  std::vector<BatchNorm*> out;
  nn::Network& src = source_.network;
  for (std::size_t i = 0; i < src.stage_count(); ++i) {
    for (BatchNorm* bn : src.stage_batch_norms(i)) out.push_back(bn);
    for (BatchNorm* bn : second_.stage_batch_norms(i)) out.push_back(bn);
  }
  for (BatchNorm* bn : src.head_batch_norms()) out.push_back(bn);
  for (BatchNorm* bn : second_.head_batch_norms()) out.push_back(bn);
  return out;
}

std::vector<nn::Layer*> TargetNetwork::all_layers() {
  std::vector<nn::Layer*> out = source_.network.all_layers();
  for (nn::Layer* l : second_.all_layers()) out.push_back(l);
  for (auto& s : scalars_)
    if (s) out.push_back(s.get());
  return out;
}

std::optional<int> TargetNetwork::bank_subject(const BatchNorm* bn, int subject) const {
  auto& src = const_cast<nn::Network&>(source_.network);
  const auto bns = src.batch_norms();
  if (std::find(bns.begin(), bns.end(), bn) == bns.end()) return subject;
  if (single_stream_) return std::nullopt;
  return source_bank_;
}

std::vector<nn::ScalarScale*> TargetNetwork::scalars() {
  std::vector<nn::ScalarScale*> out;
  for (auto& s : scalars_)
    if (s) out.push_back(s.get());
  return out;
}

void TargetNetwork::set_scalars(double value) {
  for (nn::ScalarScale* s : scalars()) s->scale().value.fill(value);
}

TargetNetwork build_target(const SourceNetwork& source, std::uint64_t second_seed, std::size_t num_classes,
                           double dropout, bool single_stream) {
  ArchitectureSpec spec = source.spec;
  spec.pelu_only = true;
  spec.seed = second_seed;
  spec.dropout = dropout;
  if (num_classes != 0) spec.num_classes = num_classes;
  TargetNetwork t(source, build_network(spec), spec, single_stream);
  set_dropout(t.source().network, dropout);
  return t;
}

nn::TrainHistory train_target(TargetNetwork& target, const nn::LabeledSet& data, const nn::TrainConfig& cfg,
                              const nn::LabeledSet* validation) {
  nn::TrainHistory h = nn::train(target, data, cfg, validation);
  if (cfg.max_epochs > 0) nn::finalize_bn(target, data);
  return h;
}

std::uint64_t frozen_checksum(nn::Model& model) {
  std::uint64_t h = 14695981039346656037ULL;
  for (Parameter* p : model.parameters()) {
    if (!p->frozen) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void save_source(const std::filesystem::path& path, SourceNetwork& source) {
  json extra = {{"subjects", source.subjects},
                {"reference_profile", profile_json(source.reference_profile)},
                {"frozen", source.frozen}};
  nn::save_checkpoint(path, "network", source.spec.to_json(), source.network, extra);
}

SourceNetwork load_source(const std::filesystem::path& path) {
  const json doc = nn::read_checkpoint(path);
  if (doc.at("kind") != "network") throw DataError(path.string() + " does not hold a source network");
  try {
    ArchitectureSpec spec = ArchitectureSpec::from_json(doc.at("architecture"));
    SourceNetwork src{spec, build_network(spec), doc.value("subjects", std::vector<int>{}),
                      profile_from_json(doc.value("reference_profile", json::array())), doc.value("frozen", false)};
    nn::model_state_from_json(src.network, doc.at("state"));
    return src;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_target(const std::filesystem::path& path, TargetNetwork& target, const json& extra) {
  json arch = {{"source", target.source().spec.to_json()},
               {"second", target.second_spec().to_json()},
               {"single_stream", target.single_stream()},
               {"source_bank", target.source_bank()},
               {"source_subjects", target.source().subjects},
               {"reference_profile", profile_json(target.source().reference_profile)}};
  nn::save_checkpoint(path, "target", arch, target, extra);
}

TargetNetwork load_target(const std::filesystem::path& path) {
  const json doc = nn::read_checkpoint(path);
  if (doc.at("kind") != "target") throw DataError(path.string() + " does not hold a target network");
  try {
    const json& a = doc.at("architecture");
    ArchitectureSpec sspec = ArchitectureSpec::from_json(a.at("source"));
    ArchitectureSpec tspec = ArchitectureSpec::from_json(a.at("second"));
    SourceNetwork src{sspec, build_network(sspec), a.value("source_subjects", std::vector<int>{}),
                      profile_from_json(a.value("reference_profile", json::array())), true};
    TargetNetwork t(std::move(src), build_network(tspec), tspec, a.value("single_stream", false),
                    a.at("source_bank").get<int>());
    set_dropout(t.source().network, tspec.dropout);
    nn::model_state_from_json(t, doc.at("state"));
    return t;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace emgtl
