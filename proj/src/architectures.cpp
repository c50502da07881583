#include "emgtl/architectures.hpp"

#include <algorithm>
#include <random>

#include "emgtl/errors.hpp"
#include "emgtl/timefreq.hpp"

namespace emgtl {

using nn::Sequential;
using nn::Shape;
using nn::Stage;

std::string to_string(ArchitectureName name) {
  switch (name) {
    case ArchitectureName::Spectrogram: return "spectrogram";
    case ArchitectureName::Cwt: return "cwt";
    case ArchitectureName::Raw: return "raw";
    case ArchitectureName::EnhancedRaw: return "enhanced-raw";
    case ArchitectureName::Raw1d: return "raw-1d-channelled";
  }
  return "?";
}

ArchitectureName parse_architecture(const std::string& text) {
  for (auto n : {ArchitectureName::Spectrogram, ArchitectureName::Cwt, ArchitectureName::Raw,
                 ArchitectureName::EnhancedRaw, ArchitectureName::Raw1d})
    if (text == to_string(n)) return n;
  if (text == "raw-1d") return ArchitectureName::Raw1d;
  throw ConfigError("unknown architecture '" + text + "'");
}

Shape ArchitectureSpec::input_shape() const {
  switch (name) {
    case ArchitectureName::Spectrogram: return {4, 8, 14};
    case ArchitectureName::Cwt: return {12, 8, 7};
    case ArchitectureName::Raw:
    case ArchitectureName::EnhancedRaw: return {1, kChannels, kWindowLength};
    case ArchitectureName::Raw1d: return {channels.size(), 1, kWindowLength};
  }
  return {};
}

std::size_t ArchitectureSpec::branch_count() const {
  switch (name) {
    case ArchitectureName::Spectrogram: return 2;
    case ArchitectureName::Cwt: return 4;
    default: return 1;
  }
}

std::size_t ArchitectureSpec::param_count_target() const {
  switch (name) {
    case ArchitectureName::Spectrogram: return 67179;
    case ArchitectureName::Cwt: return 30219;
    case ArchitectureName::EnhancedRaw: return 549091;
    default: return 0;
  }
}

double ArchitectureSpec::learning_rate_default() const {
  switch (name) {
    case ArchitectureName::Spectrogram: return 0.00681292;
    case ArchitectureName::Cwt: return 0.0879923;
    case ArchitectureName::Raw: return 1.1288378916846883e-5;
    case ArchitectureName::EnhancedRaw:
    case ArchitectureName::Raw1d: return 0.002335721469090121;
  }
  return 1e-3;
}

nlohmann::json ArchitectureSpec::to_json() const {
  return {{"name", to_string(name)}, {"num_classes", num_classes}, {"widths", widths},
          {"dropout", dropout},      {"pelu_only", pelu_only},     {"channels", channels},
          {"seed", seed}};
}

ArchitectureSpec ArchitectureSpec::from_json(const nlohmann::json& j) {
  try {
    ArchitectureSpec s = default_spec(parse_architecture(j.at("name").get<std::string>()),
                                      j.value("num_classes", std::size_t{7}));
    if (j.contains("widths")) s.widths = j.at("widths").get<std::vector<std::size_t>>();
    s.dropout = j.value("dropout", s.dropout);
    s.pelu_only = j.value("pelu_only", s.pelu_only);
    if (j.contains("channels")) s.channels = j.at("channels").get<std::vector<int>>();
    s.seed = j.value("seed", s.seed);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

ArchitectureSpec default_spec(ArchitectureName name, std::size_t num_classes) {
  ArchitectureSpec s;
  s.name = name;
  s.num_classes = num_classes;
  switch (name) {
    case ArchitectureName::Spectrogram: s.widths = {12, 24, 48, 60, 60}; break;
    case ArchitectureName::Cwt: s.widths = {12, 24, 40, 80, 80}; break;
    case ArchitectureName::Raw: s.widths = {16, 128}; break;
    case ArchitectureName::EnhancedRaw: s.widths = {32, 34, 500}; break;
    case ArchitectureName::Raw1d: s.widths = {32, 64, 256}; break;
  }
  if (name == ArchitectureName::Raw) s.dropout = 0.0;
  return s;
}

ArchitectureSpec reduced_spec(ArchitectureName name, std::size_t num_classes) {
  ArchitectureSpec s = default_spec(name, num_classes);
  switch (name) {
    case ArchitectureName::Spectrogram:
    case ArchitectureName::Cwt: s.widths = {2, 3, 2, 4, 3}; break;
    case ArchitectureName::Raw: s.widths = {2, 4}; break;
    case ArchitectureName::EnhancedRaw:
    case ArchitectureName::Raw1d: s.widths = {2, 2, 4}; break;
  }
  return s;
}

std::vector<int> four_channel_subset() { return {1, 3, 5, 6}; }

namespace {

enum class Act { ReLU, PReLU, PELU };

class Builder {
 public:
  Builder(const ArchitectureSpec& spec) : spec_(spec), rng_(spec.seed) {}

  // conv -> [bn] -> activation -> [pool] -> [dropout]
  Sequential conv_block(Shape& shape, std::size_t out, std::size_t kh, std::size_t kw, Act act, bool bn,
                        std::size_t pool_w) {
    Sequential s;
    s.emplace<nn::Conv2d>(shape[0], out, kh, kw, rng_);
    if (bn) s.emplace<nn::BatchNorm>(out);
    activation(s, act, out);
    if (pool_w > 1) s.emplace<nn::MaxPool2d>(1, pool_w);
    if (bn && spec_.dropout > 0.0) s.emplace<nn::Dropout>(spec_.dropout);
    shape = s.output_shape(shape);
    return s;
  }

  // [flatten] -> dense -> [bn] -> activation -> [dropout]
  Sequential fc_block(Shape& shape, std::size_t out, Act act, bool bn) {
    Sequential s;
    if (shape.size() != 1) s.emplace<nn::Flatten>();
    s.emplace<nn::Dense>(nn::shape_size(shape), out, rng_);
    if (bn) s.emplace<nn::BatchNorm>(out);
    activation(s, act, out);
    if (bn && spec_.dropout > 0.0) s.emplace<nn::Dropout>(spec_.dropout);
    shape = {out};
    return s;
  }

  Sequential head(const Shape& shape) {
    Sequential s;
    if (shape.size() != 1) s.emplace<nn::Flatten>();
    s.emplace<nn::Dense>(nn::shape_size(shape), spec_.num_classes, rng_);
    return s;
  }

  Act conv_act(Act source) const { return spec_.pelu_only ? Act::PELU : source; }
  Act fc_act(Act source) const { return spec_.pelu_only ? Act::PELU : source; }

 private:
  static void activation(Sequential& s, Act act, std::size_t channels) {
    switch (act) {
      case Act::ReLU: s.emplace<nn::ReLU>(); break;
      case Act::PReLU: s.emplace<nn::PReLU>(channels); break;
      case Act::PELU: s.emplace<nn::PELU>(); break;
    }
  }

  const ArchitectureSpec& spec_;
  std::mt19937_64 rng_;
};

void require_widths(const ArchitectureSpec& spec, std::size_t n) {
  if (spec.widths.size() != n || std::any_of(spec.widths.begin(), spec.widths.end(), [](auto w) { return w == 0; }))
    throw ConfigError(to_string(spec.name) + " needs " + std::to_string(n) + " positive widths");
}

// Multi-branch 2-D net shared by the spectrogram and CWT builders.
nn::Network slow_fusion(const ArchitectureSpec& spec, std::size_t branches, std::vector<bool> fuse) {
  require_widths(spec, 5);
  Builder b(spec);
  const Shape input = spec.input_shape();
  Shape shape = input;
  shape[0] /= branches;
  std::vector<Stage> stages;
  std::size_t streams = branches;
  const char* conv_names[] = {"conv1", "conv2", "conv3"};
  for (std::size_t k = 0; k < 3; ++k) {
    Stage st{conv_names[k], {}, fuse[k], true};
    Shape branch_shape;
    for (std::size_t i = 0; i < streams; ++i) {
      Shape s = shape;
      st.branches.push_back(b.conv_block(s, spec.widths[k], 3, 3, b.conv_act(Act::PReLU), true, 1));
      branch_shape = s;
    }
    shape = branch_shape;
    if (fuse[k]) streams /= 2;
    stages.push_back(std::move(st));
  }
  for (std::size_t k = 3; k < 5; ++k) {
    Stage st{k == 3 ? "fc4" : "fc5", {}, false, true};
    st.branches.push_back(b.fc_block(shape, spec.widths[k], b.fc_act(Act::PELU), true));
    stages.push_back(std::move(st));
  }
  Sequential head = b.head(shape);
  return nn::Network(input, branches, std::move(stages), std::move(head));
}

nn::Network raw_family(const ArchitectureSpec& spec) {
  Builder b(spec);
  const Shape input = spec.input_shape();
  Shape shape = input;
  std::vector<Stage> stages;
  if (spec.name == ArchitectureName::Raw) {
    require_widths(spec, 2);
    stages.push_back({"conv1", {}, false, true});
    stages.back().branches.push_back(b.conv_block(shape, spec.widths[0], 1, 5, b.conv_act(Act::ReLU), false, 3));
    stages.push_back({"fc", {}, false, true});
    stages.back().branches.push_back(b.fc_block(shape, spec.widths[1], b.fc_act(Act::ReLU), false));
  } else {
    require_widths(spec, 3);
    for (std::size_t k = 0; k < 2; ++k) {
      stages.push_back({k == 0 ? "conv1" : "conv2", {}, false, true});
      stages.back().branches.push_back(
          b.conv_block(shape, spec.widths[k], 1, 5, b.conv_act(Act::PReLU), true, 3));
    }
    stages.push_back({"fc", {}, false, true});
    stages.back().branches.push_back(b.fc_block(shape, spec.widths[2], b.fc_act(Act::PReLU), true));
  }
  Sequential head = b.head(shape);
  return nn::Network(input, 1, std::move(stages), std::move(head));
}

}  // namespace

nn::Network build_network(const ArchitectureSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (spec.dropout < 0.0 || spec.dropout >= 1.0) throw ConfigError("dropout rate must lie in [0,1)");
  switch (spec.name) {
    case ArchitectureName::Spectrogram: return slow_fusion(spec, 2, {false, true, false});
    case ArchitectureName::Cwt: return slow_fusion(spec, 4, {true, true, false});
    case ArchitectureName::Raw1d:
      if (spec.channels.empty()) throw ConfigError("raw-1d network needs at least one channel");
      for (int c : spec.channels)
        if (c < 0 || c >= static_cast<int>(kChannels)) throw ConfigError("raw-1d channel index out of range");
      return raw_family(spec);
    default: return raw_family(spec);
  }
}

nn::Network build_spectrogram_net(std::size_t num_classes, std::uint64_t seed) {
  auto s = default_spec(ArchitectureName::Spectrogram, num_classes);
  s.seed = seed;
  return build_network(s);
}

nn::Network build_cwt_net(std::size_t num_classes, std::uint64_t seed) {
  auto s = default_spec(ArchitectureName::Cwt, num_classes);
  s.seed = seed;
  return build_network(s);
}

nn::Network build_raw_net(std::size_t num_classes, std::uint64_t seed) {
  auto s = default_spec(ArchitectureName::Raw, num_classes);
  s.seed = seed;
  return build_network(s);
}

nn::Network build_enhanced_raw_net(std::size_t num_classes, std::uint64_t seed) {
  auto s = default_spec(ArchitectureName::EnhancedRaw, num_classes);
  s.seed = seed;
  return build_network(s);
}

nn::Network build_raw_1d_net(std::size_t num_classes, bool four_channels, std::uint64_t seed) {
  auto s = default_spec(ArchitectureName::Raw1d, num_classes);
  if (four_channels) s.channels = four_channel_subset();
  s.seed = seed;
  return build_network(s);
}

nn::Tensor make_inputs(const ArchitectureSpec& spec, std::span<const Window> windows) {
  Shape shape = spec.input_shape();
  const std::size_t per = nn::shape_size(shape);
  shape.insert(shape.begin(), windows.size());
  nn::Tensor out(shape);
  switch (spec.name) {
    case ArchitectureName::Spectrogram: {
      const auto t = spectrogram_batch(windows);
      for (std::size_t i = 0; i < t.size(); ++i) std::copy(t[i].data.begin(), t[i].data.end(), out.data() + i * per);
      break;
    }
    case ArchitectureName::Cwt: {
      const auto t = cwt_batch(windows);
      for (std::size_t i = 0; i < t.size(); ++i) std::copy(t[i].data.begin(), t[i].data.end(), out.data() + i * per);
      break;
    }
    case ArchitectureName::Raw:
    case ArchitectureName::EnhancedRaw:
      for (std::size_t i = 0; i < windows.size(); ++i)
        std::copy(windows[i].data.begin(), windows[i].data.end(), out.data() + i * per);
      break;
    case ArchitectureName::Raw1d:
      for (std::size_t i = 0; i < windows.size(); ++i)
        for (std::size_t k = 0; k < spec.channels.size(); ++k) {
          const auto ch = windows[i].channel(static_cast<std::size_t>(spec.channels[k]));
          std::copy(ch.begin(), ch.end(), out.data() + i * per + k * kWindowLength);
        }
      break;
  }
  return out;
}

nn::LabeledSet make_labeled_set(const ArchitectureSpec& spec, std::span<const Window> windows) {
  nn::LabeledSet s;
  s.inputs = make_inputs(spec, windows);
  for (const Window& w : windows) {
    s.labels.push_back(w.label);
    s.subjects.push_back(w.subject_id);
  }
  return s;
}

}  // namespace emgtl
