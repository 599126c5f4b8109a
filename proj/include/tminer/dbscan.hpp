#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tminer::ident {

struct OutlierResult {
  std::vector<int> labels;    // cluster id per point, -1 = outlier
  std::vector<int> outliers;  // sorted indices with label -1
  int cluster_count = 0;
  double eps = 0.0;
  int min_points = 0;
};

int dbscan_min_points(int n);  // ceil(ln n), floored at 3

// Distance of each point to its k-th nearest neighbor (self excluded), sorted
// ascending; the knee is the maximum positive second-order difference, ties
// broken toward larger eps.
double estimate_epsilon(const Eigen::MatrixXd& points, int k);

// Canonical labeling so independent implementations can be compared exactly:
// clusters are numbered by their lowest-indexed core point, and a border
// point joins the cluster of the lowest-indexed core point within eps.
// Neighborhoods are closed (a point counts itself), per the classic
// density-based formulation.
OutlierResult dbscan_outliers(const Eigen::MatrixXd& points, int min_points, double eps);

// Independent O(n^2) route: union-find over core-core edges instead of queue
// expansion. Exists so tests can cross-check dbscan_outliers exactly.
OutlierResult dbscan_outliers_reference(const Eigen::MatrixXd& points, int min_points,
                                        double eps);

}  // namespace tminer::ident
