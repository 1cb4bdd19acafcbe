#pragma once

// H-score: covariance-whitened between-class energy of a feature matrix,
//   H = 1/2 * sum_y P(y) * || Lambda^{-1/2} E[f~ | y] ||^2,
// with f~ the column-centred features and Lambda = cov(f~) + ridge * I.

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "strata/core/error.hpp"
#include "strata/scae/scae.hpp"

namespace strata::infometric {

struct FeatureMatrix {
  Eigen::MatrixXd features;  // n x d
  std::vector<int> labels;   // n
  int dropped_constant_columns = 0;
};

struct HScoreResult {
  double value = 0.0;
  int dropped_constant_columns = 0;
  int dims = 0;
  int samples = 0;
};

/// Removes zero-variance columns, recording how many were dropped.
inline FeatureMatrix drop_constant_columns(const Eigen::MatrixXd& F, std::vector<int> labels) {
  FeatureMatrix fm;
  fm.labels = std::move(labels);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    const double mx = F.col(j).maxCoeff(), mn = F.col(j).minCoeff();
    if (mx > mn) keep.push_back(j);
  }
  fm.features.resize(F.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) fm.features.col(static_cast<Eigen::Index>(j)) = F.col(keep[j]);
  fm.dropped_constant_columns = static_cast<int>(F.cols()) - static_cast<int>(keep.size());
  return fm;
}

/// Flattens the active (non-structural) entries of each latent feature.
inline FeatureMatrix feature_matrix(const std::vector<scae::LatentFeature>& z, std::vector<int> labels) {
  if (z.empty()) throw EmptyDatasetError("infometric", "no features");
  if (z.size() != labels.size()) throw ParameterError("infometric", "feature and label counts differ");
  const auto d = z.front().active_entries();
  Eigen::MatrixXd F(static_cast<Eigen::Index>(z.size()), d);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto& zi = z[i];
    if (zi.active_entries() != d) throw SchemaError("infometric", "features of mixed layers");
    Eigen::Index k = 0;
    for (int t = 0; t < zi.active_length; ++t)
      for (Eigen::Index c = 0; c < zi.values.cols(); ++c) F(static_cast<Eigen::Index>(i), k++) = zi.values(t, c);
  }
  return drop_constant_columns(F, std::move(labels));
}

/// Computes H for an (n x d) feature matrix. Covariance uses the population
/// (1/n) normalization and the whitening is a symmetric eigendecomposition.
inline HScoreResult hscore(const FeatureMatrix& fm, double ridge = 1e-6) {
  const Eigen::MatrixXd& F = fm.features;
  const auto n = F.rows(), d = F.cols();
  if (static_cast<std::size_t>(n) != fm.labels.size()) throw ParameterError("infometric", "label count mismatch");
  if (ridge < 0.0) throw ParameterError("infometric", "ridge must be non-negative");
  if (d == 0) throw SingularityError("infometric", "no non-constant feature columns");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < n; ++i) by_class[fm.labels[static_cast<std::size_t>(i)]].push_back(i);
  if (by_class.size() < 2) throw ParameterError("infometric", "H-score needs at least two classes");
  for (const auto& [y, idx] : by_class)
    if (idx.size() < 2)
      throw ParameterError("infometric", "class " + std::to_string(y) + " has fewer than two samples");

  const Eigen::RowVectorXd mean = F.colwise().mean();
  const Eigen::MatrixXd centred = F.rowwise() - mean;
  Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n);
  cov.diagonal().array() += ridge;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("infometric", "eigendecomposition failed");
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  if (lambda.minCoeff() <= 1e-12 * scale)
    throw SingularityError("infometric",
                           "feature covariance is singular; use a positive ridge (e.g. 1e-6)");
  const Eigen::MatrixXd& V = eig.eigenvectors();
  const Eigen::VectorXd inv_sqrt = lambda.cwiseSqrt().cwiseInverse();

  double h = 0.0;
  for (const auto& [y, idx] : by_class) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    for (auto i : idx) m += centred.row(i).transpose();
    m /= static_cast<double>(idx.size());
    const Eigen::VectorXd w = inv_sqrt.asDiagonal() * (V.transpose() * m);
    const double prior = static_cast<double>(idx.size()) / static_cast<double>(n);
    h += prior * w.squaredNorm();
  }
  HScoreResult r;
  r.value = 0.5 * h;
  r.dropped_constant_columns = fm.dropped_constant_columns;
  r.dims = static_cast<int>(d);
  r.samples = static_cast<int>(n);
  return r;
}

}  // namespace strata::infometric
