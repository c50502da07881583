#include <doctest.h>

#include <cmath>
#include <set>

#include "emgtl/errors.hpp"
#include "emgtl/features.hpp"
#include "emgtl/timefreq.hpp"
#include "support.hpp"

using namespace emgtl;

namespace {

std::vector<double> v(std::initializer_list<double> xs) { return xs; }

std::vector<double> channel_vec(const Window& w, std::size_t c) {
  const auto s = w.channel(c);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("scalar feature examples") {
    CHECK(mav(v({-2, -2, -2, -2})) == 2.0);
    CHECK(mav(v({0, 0, 0})) == 0.0);
    CHECK(mav(v({1, -2, 3, -4})) == 2.5);

    CHECK(ssc(v({0, 1, 0, 1, 0}), 0.0) == 3);
    CHECK(ssc(v({0, 1, 2, 3}), 0.0) == 0);
    CHECK_THROWS_AS(ssc(v({0, 1}), 0.0), DataError);

    CHECK(zc(v({1, -1, 1, -1}), 0.0) == 3);
    CHECK(zc(v({1, 2, 3, 0.5}), 0.0) == 0);
    CHECK(zc(v({0, -1, 0}), 0.0) == 2);  // zero counts as positive
    CHECK(zc(v({0.5, -0.5, 3, -3}), 2.0) == 2);

    CHECK(wl(v({0, 1, 0, 1})) == 3.0);
    CHECK(wl(v({4, 4, 4})) == 0.0);
    std::vector<double> ramp(52);
    for (std::size_t i = 0; i < 52; ++i) ramp[i] = static_cast<double>(i);
    CHECK(wl(ramp) == 51.0);

    CHECK(skewness(v({1, 2, 3})).value == doctest::Approx(0.0));
    CHECK(skewness(v({0, 0, 1})).value == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    const auto flat = skewness(v({5, 5, 5}));
    CHECK(flat.value == 0.0);
    CHECK(flat.degenerate);

    CHECK(rms(v({3, 4})) == doctest::Approx(std::sqrt(12.5)));
    CHECK(rms(v({0, 0})) == 0.0);

    CHECK(iemg(v({1, -2, 3})) == 6.0);
    CHECK(iemg(v({0, 0})) == 0.0);
  }

  TEST_CASE("scalar identities on random input") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = testing::random_vector(52, rng, 20.0);
      const auto h = hjorth(x);
      double mean = 0.0;
      for (double s : x) mean += s / 52.0;
      CHECK(rms(x) == doctest::Approx(std::sqrt(h.activity + mean * mean)).epsilon(1e-12));
      CHECK(iemg(x) == doctest::Approx(52.0 * mav(x)).epsilon(1e-12));
    }
  }

  TEST_CASE("hjorth examples") {
    const auto h = hjorth(v({1, 3, 1, 3}));
    CHECK(h.activity == doctest::Approx(1.0));
    const auto c = hjorth(v({2, 2, 2, 2}));
    CHECK(c.degenerate);
    CHECK(c.activity == 0.0);
    CHECK(c.mobility == 0.0);
    CHECK(c.complexity == 0.0);
    CHECK_THROWS_AS(hjorth(v({1, 2})), DataError);
  }

  TEST_CASE("AR estimates") {
    // x_k = 0.5 x_{k-1}, started from 1 and a long run
    std::vector<double> ar1(4000);
    ar1[0] = 1.0;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t k = 1; k < ar1.size(); ++k) ar1[k] = 0.5 * ar1[k - 1] + noise(rng);
    CHECK(ar_coefficients(ar1, 1).values[0] == doctest::Approx(0.5).epsilon(0.1));
    std::vector<double> pure(52);
    pure[0] = 100.0;
    for (std::size_t k = 1; k < pure.size(); ++k) pure[k] = 0.5 * pure[k - 1];
    CHECK(ar_coefficients(pure, 1).values[0] == doctest::Approx(0.5).epsilon(0.05));

    const auto z = ar_coefficients(std::vector<double>(52, 0.0), 11);
    CHECK(z.degenerate);
    CHECK(z.values == std::vector<double>(11, 0.0));

    // closed-form 2x2 Yule-Walker solve on r = [1, 0.6, 0.2]
    const std::vector<double> r{1.0, 0.6, 0.2};
    const auto a = levinson_durbin(r, 2);
    const double det = 1.0 - 0.36;
    CHECK(a[0] == doctest::Approx((0.6 * 1.0 - 0.6 * 0.2) / det).epsilon(1e-14));
    CHECK(a[1] == doctest::Approx((1.0 * 0.2 - 0.6 * 0.6) / det).epsilon(1e-14));
    CHECK_THROWS_AS(ar_coefficients(std::vector<double>(5, 1.0), 5), DataError);
  }

  TEST_CASE("sampen examples") {
    std::vector<double> periodic(52);
    for (std::size_t i = 0; i < 52; ++i) periodic[i] = i % 2 ? 2.0 : 1.0;
    const auto p = sampen(periodic);
    CHECK(p.value == doctest::Approx(0.0));
    CHECK_FALSE(p.degenerate);
    const auto c = sampen(std::vector<double>(52, 7.0));
    CHECK(c.degenerate);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = testing::random_vector(52, rng, 10.0);
      bool degenerate = false;
      const double oracle = testing::o_sampen(x, 2, 0.2, &degenerate);
      const auto got = sampen(x, 2, 0.2);
      REQUIRE(got.value == doctest::Approx(oracle).epsilon(1e-12));
      REQUIRE(got.degenerate == degenerate);
    }
    // cap override
    const auto spikes = testing::random_vector(52, rng, 10.0);
    const auto capped = sampen(spikes, 2, 1e-12, 9.5);
    CHECK(capped.degenerate);
    CHECK(capped.value == 9.5);
  }

  TEST_CASE("hist examples") {
    const auto c = hist(std::vector<double>(52, 3.0));
    CHECK(c.degenerate);
    CHECK(c.values[10] == 52.0);
    std::vector<double> pm(52);
    for (std::size_t i = 0; i < 52; ++i) pm[i] = i % 2 ? 4.0 : -4.0;
    const auto h = hist(pm);
    double total = 0.0;
    for (double x : h.values) total += x;
    CHECK(total == 52.0);
    // sigma = 4, range [-12, 12], width 1.2: -4 -> bin 6, +4 -> bin 13
    CHECK(h.values[6] == 26.0);
    CHECK(h.values[13] == 26.0);
    // a sample equal to the mean sits on the centre edge and goes right
    const std::vector<double> tie{-7.0, 0.0, 7.0, 0.0, -7.0, 7.0};
    CHECK(hist(tie).values[10] == 2.0);
    CHECK(hist(tie).values[9] == 0.0);
    for (const Window& w : testing::random_windows(300, 41))
      for (std::size_t c = 0; c < kChannels; ++c) REQUIRE(hist(w.channel(c)).values == testing::o_hist(w.channel(c), 20, 3.0));
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const auto x = testing::random_vector(52, rng, 5.0);
      REQUIRE(hist(x).values == testing::o_hist(x, 20, 3.0));
    }
  }

  TEST_CASE("cepstral recursion") {
    const auto c = cepstral_from_ar(v({0.5, 0.1, 0.0, 0.0}), 4);
    CHECK(c[0] == doctest::Approx(-0.5));
    CHECK(c[1] == doctest::Approx(0.025).epsilon(1e-14));
    CHECK(cepstral_from_ar(v({0, 0, 0, 0}), 4) == std::vector<double>(4, 0.0));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.24, 0.24);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> a(4);
      for (auto& x : a) x = u(rng);  // sum |a| < 1 keeps 1 + sum a z^-k minimum phase
      const auto got = cepstral_from_ar(a, 4);
      const auto oracle = testing::o_cepstral_spectral(a, 4);
      for (std::size_t i = 0; i < 4; ++i) REQUIRE(got[i] == doctest::Approx(oracle[i]).epsilon(1e-10).scale(1e-3));
    }
  }

  TEST_CASE("every feature against its brute-force oracle") {
    const auto windows = testing::random_windows(200, 6);
    for (const Window& w : windows) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const auto x = channel_vec(w, c);
        REQUIRE(mav(x) == doctest::Approx(testing::o_mav(x)).epsilon(1e-12));
        REQUIRE(static_cast<double>(zc(x, 0.0)) == testing::o_zc(x, 0.0));
        REQUIRE(static_cast<double>(zc(x, 4.0)) == testing::o_zc(x, 4.0));
        REQUIRE(static_cast<double>(ssc(x, 0.0)) == testing::o_ssc(x, 0.0));
        REQUIRE(static_cast<double>(ssc(x, 10.0)) == testing::o_ssc(x, 10.0));
        REQUIRE(wl(x) == doctest::Approx(testing::o_wl(x)).epsilon(1e-12));
        REQUIRE(skewness(x).value == doctest::Approx(testing::o_skewness(x)).epsilon(1e-10));
        REQUIRE(rms(x) == doctest::Approx(testing::o_rms(x)).epsilon(1e-12));
        REQUIRE(iemg(x) == doctest::Approx(testing::o_iemg(x)).epsilon(1e-12));
        const auto ar = ar_coefficients(x, 11).values;
        const auto oar = testing::o_ar(x, 11);
        for (std::size_t i = 0; i < 11; ++i) REQUIRE(ar[i] == doctest::Approx(oar[i]).epsilon(1e-9).scale(1e-3));
        const auto h = hjorth(x);
        const auto oh = testing::o_hjorth(x);
        REQUIRE(h.activity == doctest::Approx(oh[0]).epsilon(1e-12));
        REQUIRE(h.mobility == doctest::Approx(oh[1]).epsilon(1e-12));
        REQUIRE(h.complexity == doctest::Approx(oh[2]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("scale behaviour") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = testing::random_vector(52, rng, 10.0);
      auto y = x;
      for (auto& s : y) s *= 3.0;
      CHECK(mav(y) == doctest::Approx(3.0 * mav(x)));
      CHECK(rms(y) == doctest::Approx(3.0 * rms(x)));
      CHECK(wl(y) == doctest::Approx(3.0 * wl(x)));
      CHECK(iemg(y) == doctest::Approx(3.0 * iemg(x)));
      CHECK(zc(y, 0.0) == zc(x, 0.0));
      CHECK(ssc(y, 0.0) == ssc(x, 0.0));
      CHECK(skewness(y).value == doctest::Approx(skewness(x).value));
      CHECK(sampen(y).value == doctest::Approx(sampen(x).value));
    }
  }

  TEST_CASE("feature set layouts") {
    CHECK(feature_layout(FeatureSet::TD).size() == 32);
    CHECK(feature_layout(FeatureSet::EnhancedTD).size() == 168);
    CHECK(feature_layout(FeatureSet::NinaPro).size() == (1 + 6 + 20 + 4) * 8);
    CHECK(feature_layout(FeatureSet::SampEnPipeline).size() == (1 + 4 + 1 + 1) * 8);
    for (FeatureSet set : {FeatureSet::TD, FeatureSet::EnhancedTD, FeatureSet::NinaPro, FeatureSet::SampEnPipeline}) {
      const auto layout = feature_layout(set);
      std::set<std::string> names;
      for (const auto& d : layout) names.insert(d.column_name());
      CHECK(names.size() == layout.size());
      const auto fv = assemble_feature_set(testing::random_windows(1, 8)[0], set);
      CHECK(fv.values.size() == layout.size());
      CHECK(fv.layout == layout);
    }
    const auto td = assemble_feature_set(Window{}, FeatureSet::TD);
    CHECK(td.values == std::vector<double>(32, 0.0));
  }

  TEST_CASE("feature sets concatenate per-channel blocks") {
    const Window w = testing::random_windows(1, 9)[0];
    const auto fv = assemble_feature_set(w, FeatureSet::NinaPro);
    const std::size_t block = fv.values.size() / kChannels;
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto x = channel_vec(w, c);
      const double* b = fv.values.data() + c * block;
      CHECK(b[0] == doctest::Approx(rms(x)));
      const auto m = mdwt(x);
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(b[1 + i] == m[i]);
      const auto h = hist(x).values;
      for (std::size_t i = 0; i < 20; ++i) CHECK(b[7 + i] == h[i]);
      CHECK(b[27] == mav(x));
      CHECK(b[30] == wl(x));
    }
    // channel permutation permutes blocks
    const auto shifted = assemble_feature_set(apply_shift(w, 2), FeatureSet::EnhancedTD);
    const auto base = assemble_feature_set(w, FeatureSet::EnhancedTD);
    const std::size_t eb = base.values.size() / kChannels;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t i = 0; i < eb; ++i) REQUIRE(shifted.values[c * eb + i] == base.values[((c + 2) % 8) * eb + i]);
  }

  TEST_CASE("degenerate flags propagate") {
    Window w = testing::random_windows(1, 10)[0];
    for (auto& x : w.channel(4)) x = 0.0;
    const auto fv = assemble_feature_set(w, FeatureSet::EnhancedTD);
    bool found = false;
    for (const auto& name : fv.degenerate) found = found || name.find("_ch4_") != std::string::npos;
    CHECK(found);
  }

  TEST_CASE("serial and OpenMP extraction agree bitwise") {
    const auto windows = testing::random_windows(100, 11);
    for (FeatureSet set : {FeatureSet::TD, FeatureSet::EnhancedTD, FeatureSet::NinaPro, FeatureSet::SampEnPipeline}) {
      const auto a = extract_features(windows, set, {}, Backend::Serial);
      const auto b = extract_features(windows, set, {}, Backend::OpenMP);
      for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].values == b[i].values);
    }
  }

  TEST_CASE("config validation") {
    FeatureConfig cfg;
    cfg.epsilon_zc = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(parse_feature_set("nope"), ConfigError);
  }
}
