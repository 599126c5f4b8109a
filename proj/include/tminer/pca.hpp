#pragma once

#include <Eigen/Dense>

namespace tminer::ident {

struct ReducedPointSet {
  Eigen::MatrixXd points;     // n x kept
  Eigen::MatrixXd basis;      // D x kept, orthonormal columns, variance-descending
  Eigen::RowVectorXd mean;    // 1 x D
  Eigen::VectorXd explained;  // per-component variance fraction, kept components
  double requested_fraction = 0.95;
};

// Mean-centers, eigendecomposes the covariance, keeps the minimal leading
// component count reaching the variance fraction. Sign convention: each
// component's largest-magnitude entry is positive.
ReducedPointSet pca_reduce(const Eigen::MatrixXd& X, double variance_fraction = 0.95);

}  // namespace tminer::ident
