#include <doctest.h>

#include <filesystem>

#include "emgtl/errors.hpp"
#include "emgtl/nn/checkpoint.hpp"
#include "emgtl/transfer.hpp"
#include "support.hpp"

using namespace emgtl;

namespace {

nn::LabeledSet random_set(const ArchitectureSpec& spec, std::size_t n, std::vector<int> subjects, std::uint64_t seed) {
  nn::Shape shape = spec.input_shape();
  shape.insert(shape.begin(), n);
  std::mt19937_64 rng(seed);
  nn::LabeledSet set;
  set.inputs = nn::Tensor(shape, testing::random_vector(nn::shape_size(shape), rng));
  for (std::size_t i = 0; i < n; ++i) {
    set.labels.push_back(static_cast<int>(i % spec.num_classes));
    set.subjects.push_back(subjects[i % subjects.size()]);
  }
  return set;
}

nn::TrainConfig quick_config(std::uint64_t seed = 1) {
  nn::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  return cfg;
}

SourceNetwork small_source(ArchitectureName name = ArchitectureName::Cwt) {
  ArchitectureSpec spec = reduced_spec(name, 3);
  spec.seed = 3;
  return pretrain(spec, random_set(spec, 60, {0, 1}, 4), quick_config());
}

}  // namespace

TEST_SUITE("transfer") {
  TEST_CASE("pretraining freezes everything except batch-norm scale and shift") {
    SourceNetwork src = small_source();
    CHECK(src.frozen);
    CHECK(src.subjects == std::vector<int>{0, 1});
    for (nn::Parameter* p : src.network.parameters()) CHECK(p->frozen == !p->batch_norm);
    for (nn::BatchNorm* bn : src.network.batch_norms()) {
      CHECK(bn->has_subject(0));
      CHECK(bn->has_subject(1));
    }
  }

  TEST_CASE("subjects below one batch are dropped with a warning") {
    ArchitectureSpec spec = reduced_spec(ArchitectureName::Raw, 3);
    nn::LabeledSet set = random_set(spec, 60, {0, 1}, 5);
    set.subjects[0] = 9;
    set.subjects[2] = 9;
    nn::TrainHistory h;
    SourceNetwork src = pretrain(spec, set, quick_config(), &h);
    CHECK(h.dropped_subjects == std::vector<int>{9});
    CHECK(h.warnings.size() == 1);
    CHECK(src.subjects == std::vector<int>{0, 1});
  }

  TEST_CASE("target network wiring") {
    SourceNetwork src = small_source();
    TargetNetwork t = build_target(src, 11);
    CHECK(t.source_bank() == 2);
    for (nn::BatchNorm* bn : t.source().network.batch_norms()) {
      REQUIRE(bn->has_subject(2));
      // new bank starts at the mean of the source subjects
      for (std::size_t c = 0; c < bn->features(); ++c)
        CHECK(bn->bank().at(2).mean[c] ==
              doctest::Approx((bn->bank().at(0).mean[c] + bn->bank().at(1).mean[c]) / 2.0));
      CHECK(t.bank_subject(bn, 5) == std::optional<int>(2));
    }
    for (nn::BatchNorm* bn : t.second().batch_norms()) CHECK(t.bank_subject(bn, 5) == std::optional<int>(5));
    for (nn::Layer* l : t.second().all_layers()) {
      CHECK(l->kind() != "prelu");
      CHECK(l->kind() != "relu");
    }
    CHECK_FALSE(t.scalars().empty());
    for (nn::ScalarScale* s : t.scalars())
      for (double v : s->scale().value.values()) CHECK(v == 1.0);

    // with every scalar at zero the target reduces to its second network
    nn::LabeledSet data = random_set(t.second_spec(), 12, {5}, 12);
    nn::finalize_bn(t, data);
    t.set_scalars(0.0);
    nn::ForwardContext ctx{nn::Mode::Eval, 5, nullptr, nullptr};
    const nn::Tensor a = t.forward(data.inputs, ctx);
    const nn::Tensor b = t.second().forward(data.inputs, ctx);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    t.set_scalars(1.0);
    CHECK(t.forward(data.inputs, ctx).storage() != b.storage());
  }

  TEST_CASE("target gradients cover scalars and source batch-norm parameters") {
    for (auto name : {ArchitectureName::Cwt, ArchitectureName::Spectrogram, ArchitectureName::EnhancedRaw}) {
      SourceNetwork src = small_source(name);
      TargetNetwork t = build_target(src, 13);
      t.set_scalars(0.8);
      nn::LabeledSet x = random_set(t.second_spec(), 4, {2}, 14);
      const auto g = testing::gradient_check(t, x.inputs, x.labels, 2, 20);
      INFO(to_string(name), " worst ", g.worst);
      CHECK(g.max_relative_error < 1e-6);
      bool has_scalar = false, has_source_bn = false;
      for (nn::Parameter* p : t.parameters()) {
        if (p->frozen) continue;
        has_scalar = has_scalar || p->name.rfind("scalar.", 0) == 0;
        has_source_bn = has_source_bn || (p->name.rfind("source.", 0) == 0 && p->batch_norm);
        CHECK((p->name.rfind("source.", 0) != 0 || p->batch_norm));
      }
      CHECK(has_scalar);
      CHECK(has_source_bn);
    }
  }

  TEST_CASE("target training never moves frozen weights or other subjects' banks") {
    SourceNetwork src = small_source();
    const auto before_banks = nn::capture_state(src.network).banks;
    TargetNetwork t = build_target(src, 15);
    const std::uint64_t sum = frozen_checksum(t);
    nn::LabeledSet data = random_set(t.second_spec(), 40, {7}, 16);
    train_target(t, data, quick_config(17));
    CHECK(frozen_checksum(t) == sum);
    const auto after = nn::capture_state(t.source().network).banks;
    for (std::size_t i = 0; i < after.size(); ++i) {
      CHECK(after[i].at(0).mean == before_banks[i].at(0).mean);
      CHECK(after[i].at(1).var == before_banks[i].at(1).var);
    }
  }

  TEST_CASE("single-stream ablation keeps the source statistics fixed") {
    SourceNetwork src = small_source();
    TargetNetwork t = build_target(src, 18, 0, kTargetDropout, true);
    CHECK(t.single_stream());
    const auto banks = nn::capture_state(t.source().network).banks;
    for (nn::BatchNorm* bn : t.source().network.batch_norms()) CHECK_FALSE(t.bank_subject(bn, 3).has_value());
    for (nn::Parameter* p : t.source().network.parameters()) CHECK(p->frozen);
    train_target(t, random_set(t.second_spec(), 40, {3}, 19), quick_config(20));
    CHECK(nn::capture_state(t.source().network).banks.size() == banks.size());
    for (std::size_t i = 0; i < banks.size(); ++i)
      CHECK(nn::capture_state(t.source().network).banks[i].at(2).mean == banks[i].at(2).mean);
  }

  TEST_CASE("checkpoints round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "emgtl_transfer_ckpt";
    std::filesystem::create_directories(dir);
    SourceNetwork src = small_source();
    src.reference_profile.assign(3, std::array<double, kChannels>{0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125});
    save_source(dir / "source.json", src);
    SourceNetwork back = load_source(dir / "source.json");
    CHECK(back.subjects == src.subjects);
    CHECK(back.reference_profile == src.reference_profile);
    CHECK(nn::model_state_to_json(back.network).dump() == nn::model_state_to_json(src.network).dump());

    TargetNetwork t = build_target(src, 21);
    nn::LabeledSet data = random_set(t.second_spec(), 40, {4}, 22);
    train_target(t, data, quick_config(23));
    save_target(dir / "target.json", t);
    TargetNetwork u = load_target(dir / "target.json");
    CHECK(nn::predict_log_proba(t, data).storage() == nn::predict_log_proba(u, data).storage());
    CHECK(frozen_checksum(u) == frozen_checksum(t));
    CHECK_THROWS_AS(load_target(dir / "source.json"), DataError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("mismatched networks cannot be joined") {
    SourceNetwork src = small_source(ArchitectureName::Cwt);
    ArchitectureSpec other = reduced_spec(ArchitectureName::Spectrogram, 3);
    other.pelu_only = true;
    CHECK_THROWS_AS(TargetNetwork(src, build_network(other), other), ConfigError);
  }
}
