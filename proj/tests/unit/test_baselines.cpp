#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "emgtl/baselines.hpp"
#include "emgtl/errors.hpp"

using namespace emgtl;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs gaussian_blobs(int classes, int per_class, int dims, double spread, std::uint64_t seed,
                     std::uint64_t noise_seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd centres(classes, dims);
  for (int c = 0; c < classes; ++c)
    for (int d = 0; d < dims; ++d) centres(c, d) = spread * n01(rng);
  if (noise_seed != 0) rng.seed(noise_seed);
  Blobs b{Eigen::MatrixXd(classes * per_class, dims), {}};
  for (int i = 0; i < classes * per_class; ++i) {
    const int c = i % classes;
    for (int d = 0; d < dims; ++d) b.x(i, d) = centres(c, d) + n01(rng) * (1.0 + 0.3 * d);
    b.y.push_back(c * 2 + 1);  // non-contiguous labels
  }
  return b;
}

// Discriminant oracle: pooled covariance with N - C degrees of freedom,
// inverted by full-pivot LU.
std::vector<int> lda_oracle(const Blobs& train, const Eigen::MatrixXd& query) {
  std::map<int, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < train.y.size(); ++i) rows[train.y[i]].push_back(static_cast<Eigen::Index>(i));
  const auto d = train.x.cols();
  std::vector<Eigen::VectorXd> means;
  std::vector<double> priors;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (const auto& [label, idx] : rows) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (auto i : idx) mu += train.x.row(i).transpose();
    mu /= static_cast<double>(idx.size());
    for (auto i : idx) {
      const Eigen::VectorXd r = train.x.row(i).transpose() - mu;
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) s(a, b) += r(a) * r(b);
    }
    means.push_back(mu);
    priors.push_back(static_cast<double>(idx.size()) / static_cast<double>(train.y.size()));
  }
  s /= static_cast<double>(train.y.size() - rows.size());
  const Eigen::MatrixXd inv = s.fullPivLu().inverse();
  std::vector<int> labels;
  for (const auto& kv : rows) labels.push_back(kv.first);
  std::vector<int> out;
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    const Eigen::VectorXd x = query.row(q).transpose();
    double best = -1e300;
    int arg = 0;
    for (std::size_t k = 0; k < means.size(); ++k) {
      const double g = x.dot(inv * means[k]) - 0.5 * means[k].dot(inv * means[k]) + std::log(priors[k]);
      if (g > best) {
        best = g;
        arg = labels[k];
      }
    }
    out.push_back(arg);
  }
  return out;
}

std::vector<int> knn_oracle(const Eigen::MatrixXd& train, const std::vector<int>& labels, const Eigen::MatrixXd& query,
                            std::size_t k, Metric metric) {
  std::vector<int> out;
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    std::vector<std::pair<double, std::size_t>> dist;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
      const Eigen::RowVectorXd diff = train.row(i) - query.row(q);
      const double dd = metric == Metric::Euclidean ? diff.norm() : diff.cwiseAbs().sum();
      dist.emplace_back(dd, static_cast<std::size_t>(i));
    }
    std::sort(dist.begin(), dist.end());  // ties by row index
    std::map<int, std::pair<int, double>> votes;
    for (std::size_t j = 0; j < k; ++j) {
      auto& v = votes[labels[dist[j].second]];
      v.first += 1;
      v.second += dist[j].first;
    }
    int best = 0;
    int count = -1;
    double mean = 0.0;
    for (const auto& [label, v] : votes) {  // ascending labels
      const double m = v.second / v.first;
      if (v.first > count || (v.first == count && m < mean)) {
        best = label;
        count = v.first;
        mean = m;
      }
    }
    out.push_back(best);
  }
  return out;
}

double fisher_ratio(const Eigen::MatrixXd& sb, const Eigen::MatrixXd& sw, const Eigen::VectorXd& v) {
  return v.dot(sb * v) / v.dot(sw * v);
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("LDA decisions match the closed-form discriminant") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Blobs train = gaussian_blobs(3 + static_cast<int>(seed % 3), 30, 4, 1.5, seed);
      const Blobs test = gaussian_blobs(3 + static_cast<int>(seed % 3), 20, 4, 1.5, seed + 100);
      const LdaModel m = lda_fit(train.x, train.y);
      CHECK_FALSE(m.regularized);
      REQUIRE(lda_classify(m, test.x) == lda_oracle(train, test.x));
    }
  }

  TEST_CASE("LDA projection maximises the Fisher ratio") {
    const Blobs b = gaussian_blobs(2, 50, 3, 2.0, 7);
    const LdaModel m = lda_fit(b.x, b.y);
    REQUIRE(m.projection.cols() == 1);
    // two classes: direction proportional to Sigma^-1 (mu_1 - mu_0)
    const Eigen::VectorXd w = m.covariance.fullPivLu().solve((m.means.row(1) - m.means.row(0)).transpose());
    const Eigen::VectorXd p = m.projection.col(0);
    CHECK(std::abs(p.normalized().dot(w.normalized())) == doctest::Approx(1.0).epsilon(1e-9));

    const Blobs c = gaussian_blobs(4, 40, 5, 2.0, 8);
    const LdaModel mc = lda_fit(c.x, c.y);
    CHECK(mc.projection.cols() == 3);
    const Eigen::RowVectorXd grand = c.x.colwise().mean();
    Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(5, 5);
    for (Eigen::Index k = 0; k < 4; ++k) {
      const Eigen::RowVectorXd r = mc.means.row(k) - grand;
      sb += 40.0 * r.transpose() * r;
    }
    const double j0 = fisher_ratio(sb, mc.covariance, mc.projection.col(0));
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 300; ++t) {
      Eigen::VectorXd v(5);
      for (auto& e : v) e = n01(rng);
      REQUIRE(fisher_ratio(sb, mc.covariance, v) <= j0 * (1.0 + 1e-9));
    }
    CHECK(j0 >= fisher_ratio(sb, mc.covariance, mc.projection.col(1)));
    CHECK(lda_project(mc, c.x).cols() == 3);
  }

  TEST_CASE("singular covariance is regularised") {
    Blobs b = gaussian_blobs(3, 20, 3, 2.0, 10);
    Eigen::MatrixXd x(b.x.rows(), 4);
    x << b.x, b.x.col(0);  // duplicated column
    const LdaModel m = lda_fit(x, b.y);
    CHECK(m.regularized);
    CHECK(m.ridge == doctest::Approx(1e-6 * m.covariance.trace() / 4.0).epsilon(1e-3));
    CHECK(lda_classify(m, x).size() == static_cast<std::size_t>(x.rows()));
    CHECK_THROWS_AS(lda_fit(x, std::vector<int>(static_cast<std::size_t>(x.rows()), 1)), DataError);
  }

  TEST_CASE("KNN matches the brute-force oracle, ties included") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> small(0, 3);  // integer grid makes distance ties common
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::MatrixXd train(40, 3), query(15, 3);
      std::vector<int> labels;
      for (Eigen::Index i = 0; i < 40; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) train(i, j) = small(rng);
        labels.push_back(small(rng));
      }
      for (Eigen::Index i = 0; i < 15; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) query(i, j) = small(rng);
      for (std::size_t k : {1u, 2u, 4u, 7u})
        for (Metric metric : {Metric::Euclidean, Metric::Manhattan})
          REQUIRE(knn_classify(train, labels, query, k, metric) == knn_oracle(train, labels, query, k, metric));
    }
  }

  TEST_CASE("KNN examples") {
    Eigen::MatrixXd train(4, 1);
    train << 0.0, 1.0, 10.0, 11.0;
    const std::vector<int> labels{5, 5, 2, 2};
    Eigen::MatrixXd q(2, 1);
    q << 0.4, 10.6;
    CHECK(knn_classify(train, labels, q, 1) == std::vector<int>{5, 2});
    // 1 vs 1 vote: smaller mean distance wins
    Eigen::MatrixXd q2(1, 1);
    q2 << 4.0;
    Eigen::MatrixXd t2(2, 1);
    t2 << 0.0, 10.0;
    CHECK(knn_classify(t2, {1, 0}, q2, 2) == std::vector<int>{1});
    // exact tie: smaller label
    q2 << 5.0;
    CHECK(knn_classify(t2, {1, 0}, q2, 2) == std::vector<int>{0});
  }

  TEST_CASE("standardiser") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 7, 2, 7, 3, 7, 4, 7;
    const Standardizer s = Standardizer::fit(x);
    const Eigen::MatrixXd z = s.apply(x);
    CHECK(z.col(0).mean() == doctest::Approx(0.0).scale(1.0));
    CHECK(std::sqrt(z.col(0).array().square().mean()) == doctest::Approx(1.0));
    CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("feature classifier pipelines") {
    const Blobs train = gaussian_blobs(4, 40, 6, 6.0, 12);
    const Blobs test = gaussian_blobs(4, 20, 6, 6.0, 12, 99);
    for (ClassifierKind kind : {ClassifierKind::Lda, ClassifierKind::Knn})
      for (bool reduction : {false, true}) {
        FeatureClassifier clf;
        clf.kind = kind;
        clf.k = 3;
        clf.reduction = reduction;
        clf.fit(train.x, train.y);
        const auto p = clf.predict(test.x);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == test.y[i];
        CHECK(static_cast<double>(correct) / static_cast<double>(p.size()) > 0.9);
      }
    FeatureClassifier bad;
    bad.kind = ClassifierKind::Knn;
    bad.k = 1000;
    CHECK_THROWS_AS(bad.fit(train.x, train.y), ConfigError);
  }
}
