#include "emgtl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "emgtl/errors.hpp"

namespace emgtl {

LdaModel lda_fit(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw DataError("lda: feature rows and labels differ in count");
  if (d == 0) throw DataError("lda: no feature columns");
  LdaModel m;
  m.classes = labels;
  std::sort(m.classes.begin(), m.classes.end());
  m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());
  const auto c = static_cast<Eigen::Index>(m.classes.size());
  if (c < 2) throw DataError("lda needs at least 2 classes");

  std::map<int, Eigen::Index> index;
  for (Eigen::Index k = 0; k < c; ++k) index[m.classes[static_cast<std::size_t>(k)]] = k;
  m.means = Eigen::MatrixXd::Zero(c, d);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = index[labels[static_cast<std::size_t>(i)]];
    m.means.row(k) += x.row(i);
    counts(k) += 1.0;
  }
  for (Eigen::Index k = 0; k < c; ++k) m.means.row(k) /= counts(k);

  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd r = x.row(i) - m.means.row(index[labels[static_cast<std::size_t>(i)]]);
    sw.noalias() += r.transpose() * r;
  }
  const double dof = n > c ? static_cast<double>(n - c) : static_cast<double>(n);
  sw /= dof;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sw, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-10 * std::max(hi, 1e-300))) {
    const double trace = sw.trace();
    m.ridge = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-6;
    sw.diagonal().array() += m.ridge;
    m.regularized = true;
  }
  m.covariance = sw;

  for (Eigen::Index k = 0; k < c; ++k) m.priors.push_back(counts(k) / static_cast<double>(n));
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(sw);
  m.weights = ldlt.solve(m.means.transpose());
  m.offsets.resize(c);
  for (Eigen::Index k = 0; k < c; ++k)
    m.offsets(k) = -0.5 * m.means.row(k).dot(m.weights.col(k)) + std::log(m.priors[static_cast<std::size_t>(k)]);

  const Eigen::RowVectorXd grand = x.colwise().mean();
  Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index k = 0; k < c; ++k) {
    const Eigen::RowVectorXd r = m.means.row(k) - grand;
    sb.noalias() += counts(k) * r.transpose() * r;
  }
  sb /= static_cast<double>(n);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sb, sw);
  const Eigen::Index r = std::min(c - 1, d);
  m.projection.resize(d, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::VectorXd v = ges.eigenvectors().col(d - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    m.projection.col(j) = v;
  }
  return m;
}

Eigen::MatrixXd lda_project(const LdaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.projection.rows()) throw DataError("lda_project: feature width mismatch");
  return x * model.projection;
}

std::vector<int> lda_classify(const LdaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.rows()) throw DataError("lda_classify: feature width mismatch");
  const Eigen::MatrixXd scores = (x * model.weights).rowwise() + model.offsets.transpose();
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = model.classes[static_cast<std::size_t>(best)];
  }
  return out;
}

std::vector<int> knn_classify(const Eigen::MatrixXd& train, const std::vector<int>& labels,
                              const Eigen::MatrixXd& query, std::size_t k, Metric metric) {
  const auto n = static_cast<std::size_t>(train.rows());
  if (labels.size() != n) throw DataError("knn: training rows and labels differ in count");
  if (k == 0 || k > n) throw ConfigError("knn: k must lie in [1, training size]");
  if (query.cols() != train.cols()) throw DataError("knn: feature width mismatch");
  std::vector<int> out(static_cast<std::size_t>(query.rows()));
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto diff = train.row(static_cast<Eigen::Index>(i)) - query.row(q);
      const double dv = metric == Metric::Euclidean ? diff.norm() : diff.cwiseAbs().sum();
      dist[i] = {dv, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, distance sum)
    for (std::size_t j = 0; j < k; ++j) {
      auto& v = votes[labels[dist[j].second]];
      ++v.first;
      v.second += dist[j].first;
    }
    int best = 0;
    std::size_t best_count = 0;
    double best_mean = 0.0;
    for (const auto& [label, v] : votes) {  // ascending label order
      const double mean = v.second / static_cast<double>(v.first);
      if (v.first > best_count || (v.first == best_count && mean < best_mean)) {
        best = label;
        best_count = v.first;
        best_mean = mean;
      }
    }
    out[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  s.scale = Eigen::RowVectorXd::Ones(x.cols());
  if (x.rows() > 0)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().mean();
      if (var > 0.0) s.scale(j) = std::sqrt(var);
    }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::MatrixXd FeatureClassifier::transform(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = scaler_.apply(x);
  return reduction ? lda_project(reducer_, z) : z;
}

void FeatureClassifier::fit(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  scaler_ = Standardizer::fit(x);
  if (reduction) reducer_ = lda_fit(scaler_.apply(x), labels);
  const Eigen::MatrixXd z = transform(x);
  if (kind == ClassifierKind::Lda) {
    lda_ = lda_fit(z, labels);
  } else {
    if (k == 0 || k > static_cast<std::size_t>(z.rows())) throw ConfigError("knn: k must lie in [1, training size]");
    train_ = z;
    labels_ = labels;
  }
}

std::vector<int> FeatureClassifier::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd z = transform(x);
  return kind == ClassifierKind::Lda ? lda_classify(lda_, z) : knn_classify(train_, labels_, z, k, metric);
}

}  // namespace emgtl
