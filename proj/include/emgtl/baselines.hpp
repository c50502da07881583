#pragma once

#include <vector>

#include <Eigen/Dense>

namespace emgtl {

/// Shared-covariance linear discriminant.
struct LdaModel {
  std::vector<int> classes;  // sorted distinct labels
  Eigen::MatrixXd means;  // classes x d
  Eigen::MatrixXd covariance;  // pooled within-class, d x d (after regularisation)
  Eigen::MatrixXd projection;  // d x min(C-1, d), columns by decreasing separation
  Eigen::MatrixXd weights;  // d x classes, Sigma^-1 mu_c
  Eigen::VectorXd offsets;  // -0.5 mu_c' Sigma^-1 mu_c + ln prior_c
  std::vector<double> priors;
  double ridge = 0.0;
  bool regularized = false;
};

/// Rows of `x` are examples. A singular pooled covariance gets a ridge of
/// 1e-6 * trace / d (flagged in `regularized`).
LdaModel lda_fit(const Eigen::MatrixXd& x, const std::vector<int>& labels);
Eigen::MatrixXd lda_project(const LdaModel& model, const Eigen::MatrixXd& x);
/// Largest discriminant; ties go to the smallest label.
std::vector<int> lda_classify(const LdaModel& model, const Eigen::MatrixXd& x);

enum class Metric { Euclidean, Manhattan };

/// Majority vote of the k nearest training rows (distance ties keep the lower
/// row index). Vote ties: smallest mean distance, then smallest label.
std::vector<int> knn_classify(const Eigen::MatrixXd& train, const std::vector<int>& labels,
                              const Eigen::MatrixXd& query, std::size_t k, Metric metric = Metric::Euclidean);

/// Column-wise z-scoring fitted on training rows; constant columns pass through centred.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

enum class ClassifierKind { Lda, Knn };

/// Feature-based pipeline: optional LDA projection, then LDA or KNN.
struct FeatureClassifier {
  ClassifierKind kind = ClassifierKind::Lda;
  std::size_t k = 1;
  bool reduction = false;
  Metric metric = Metric::Euclidean;

  void fit(const Eigen::MatrixXd& x, const std::vector<int>& labels);
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
  bool regularized() const { return lda_.regularized || reducer_.regularized; }

 private:
  Standardizer scaler_;
  LdaModel reducer_;
  LdaModel lda_;
  Eigen::MatrixXd train_;
  std::vector<int> labels_;
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

}  // namespace emgtl
