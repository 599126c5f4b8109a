#include "tminer/pca.hpp"

#include <cmath>

#include "tminer/common.hpp"

namespace tminer::ident {

ReducedPointSet pca_reduce(const Eigen::MatrixXd& X, double variance_fraction) {
  const long n = X.rows(), D = X.cols();
  if (n < 2) throw Error("pca_reduce: need at least 2 points");
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
    throw Error("pca_reduce: variance fraction out of range");
  if (!X.allFinite()) throw Error("pca_reduce: non-finite input");

  ReducedPointSet out;
  out.requested_fraction = variance_fraction;
  out.mean = X.colwise().mean();
  Eigen::MatrixXd Xc = X.rowwise() - out.mean;
  Eigen::MatrixXd cov = (Xc.transpose() * Xc) / double(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw Error("pca_reduce: eigendecomposition failed");
  // ascending from Eigen; flip to variance-descending
  Eigen::VectorXd evals = es.eigenvalues().reverse();
  Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();

  double total = 0.0;
  for (long i = 0; i < D; ++i) total += std::max(evals(i), 0.0);
  if (total <= 0.0) throw Error("pca_reduce: zero total variance");

  long kept = 0;
  double cum = 0.0;
  for (long i = 0; i < D; ++i) {
    cum += std::max(evals(i), 0.0);
    ++kept;
    if (cum / total >= variance_fraction) break;
  }

  out.basis = evecs.leftCols(kept);
  for (long c = 0; c < kept; ++c) {
    long arg = 0;
    out.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, c) < 0.0) out.basis.col(c) = -out.basis.col(c);
  }
  out.explained = evals.head(kept).cwiseMax(0.0) / total;
  out.points = Xc * out.basis;
  return out;
}

}  // namespace tminer::ident
