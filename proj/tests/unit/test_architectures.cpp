#include <doctest.h>

#include "emgtl/architectures.hpp"
#include "emgtl/errors.hpp"
#include "emgtl/nn/checkpoint.hpp"
#include "emgtl/timefreq.hpp"
#include "support.hpp"

using namespace emgtl;

namespace {

const std::vector<ArchitectureName> kAll{ArchitectureName::Spectrogram, ArchitectureName::Cwt, ArchitectureName::Raw,
                                         ArchitectureName::EnhancedRaw, ArchitectureName::Raw1d};

nn::Tensor random_input(const ArchitectureSpec& spec, std::size_t batch, std::uint64_t seed) {
  nn::Shape shape = spec.input_shape();
  shape.insert(shape.begin(), batch);
  std::mt19937_64 rng(seed);
  const auto n = nn::shape_size(shape);
  return nn::Tensor(shape, testing::random_vector(n, rng));
}

}  // namespace

TEST_SUITE("architectures") {
  TEST_CASE("parameter counts land within 20% of the published targets") {
    for (auto name : kAll) {
      const ArchitectureSpec spec = default_spec(name);
      nn::Network net = build_network(spec);
      const std::size_t target = spec.param_count_target();
      INFO(to_string(name));
      const double n = static_cast<double>(nn::parameter_count(net));
      if (target != 0) CHECK(std::abs(n - static_cast<double>(target)) <= 0.2 * static_cast<double>(target));
      CHECK(nn::parameter_count(net) > 0);
    }
    CHECK(default_spec(ArchitectureName::Spectrogram).param_count_target() == 67179);
    CHECK(default_spec(ArchitectureName::Cwt).param_count_target() == 30219);
    CHECK(default_spec(ArchitectureName::EnhancedRaw).param_count_target() == 549091);
  }

  TEST_CASE("input shapes and logits") {
    CHECK(default_spec(ArchitectureName::Spectrogram).input_shape() == nn::Shape{4, 8, 14});
    CHECK(default_spec(ArchitectureName::Cwt).input_shape() == nn::Shape{12, 8, 7});
    CHECK(default_spec(ArchitectureName::Raw).input_shape() == nn::Shape{1, 8, 52});
    CHECK(default_spec(ArchitectureName::Raw1d).input_shape() == nn::Shape{8, 1, 52});
    for (auto name : kAll) {
      const ArchitectureSpec spec = default_spec(name, 5);
      nn::Network net = build_network(spec);
      std::mt19937_64 rng(0);
      nn::ForwardContext ctx{nn::Mode::Train, 0, &rng, nullptr};
      const nn::Tensor y = net.forward(random_input(spec, 3, 1), ctx);
      CHECK(y.shape() == nn::Shape{3, 5});
      CHECK(net.num_classes() == 5);
    }
    CHECK(build_network(default_spec(ArchitectureName::Cwt)).split() == 4);
    CHECK(build_network(default_spec(ArchitectureName::Spectrogram)).split() == 2);
  }

  TEST_CASE("reduced architectures pass a gradient check") {
    for (auto name : kAll) {
      ArchitectureSpec spec = reduced_spec(name, 3);
      spec.seed = 7;
      nn::Network net = build_network(spec);
      const auto g = testing::gradient_check(net, random_input(spec, 4, 8), {0, 1, 2, 1}, 0, 25);
      INFO(to_string(name), " worst tensor ", g.worst);
      CHECK(g.max_relative_error < 1e-6);
      spec.pelu_only = true;
      nn::Network second = build_network(spec);
      const auto p = testing::gradient_check(second, random_input(spec, 4, 9), {2, 1, 0, 0}, 0, 25);
      INFO("pelu-only worst tensor ", p.worst);
      CHECK(p.max_relative_error < 1e-6);
    }
  }

  TEST_CASE("builds are reproducible from the spec") {
    for (auto name : kAll) {
      ArchitectureSpec spec = reduced_spec(name);
      spec.seed = 42;
      nn::Network a = build_network(spec);
      nn::Network b = build_network(ArchitectureSpec::from_json(spec.to_json()));
      CHECK(nn::model_state_to_json(a).dump() == nn::model_state_to_json(b).dump());
      spec.seed = 43;
      nn::Network c = build_network(spec);
      CHECK(nn::model_state_to_json(a).dump() != nn::model_state_to_json(c).dump());
    }
  }

  TEST_CASE("network inputs follow the transforms") {
    const auto windows = testing::random_windows(3, 5);
    const auto raw = make_inputs(default_spec(ArchitectureName::Raw), windows);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < kChannels * kWindowLength; ++k) REQUIRE(raw[i * 416 + k] == windows[i].data[k]);
    const auto cwt = make_inputs(default_spec(ArchitectureName::Cwt), windows);
    const CwtTensor t = cwt_example(windows[1]);
    for (std::size_t k = 0; k < t.data.size(); ++k) REQUIRE(cwt[t.data.size() + k] == t.data[k]);
    const auto spec = spectrogram_example(windows[2]);
    const auto sp = make_inputs(default_spec(ArchitectureName::Spectrogram), windows);
    for (std::size_t k = 0; k < spec.data.size(); ++k) REQUIRE(sp[2 * spec.data.size() + k] == spec.data[k]);

    ArchitectureSpec four = default_spec(ArchitectureName::Raw1d);
    four.channels = four_channel_subset();
    CHECK(four.input_shape() == nn::Shape{4, 1, 52});
    const auto x = make_inputs(four, windows);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t j = 0; j < kWindowLength; ++j)
        REQUIRE(x[k * kWindowLength + j] == windows[0].channel(static_cast<std::size_t>(four.channels[k]))[j]);
    // channels 1, 3, 5 and 8 (1-based) are the ones removed
    CHECK(four_channel_subset() == std::vector<int>{1, 3, 5, 6});

    const auto set = make_labeled_set(default_spec(ArchitectureName::Raw), windows);
    CHECK(set.size() == 3);
    CHECK(set.labels[0] == windows[0].label);
  }

  TEST_CASE("spec errors") {
    CHECK_THROWS_AS(parse_architecture("resnet"), ConfigError);
    ArchitectureSpec s = default_spec(ArchitectureName::Cwt);
    s.widths = {1, 2};
    CHECK_THROWS_AS(build_network(s), ConfigError);
    for (auto name : kAll) CHECK(parse_architecture(to_string(name)) == name);
  }
}
