#include "tminer/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>

#include "tminer/common.hpp"

namespace tminer::ident {

namespace {

std::vector<std::vector<int>> neighborhoods(const Eigen::MatrixXd& pts, double eps) {
  const int n = static_cast<int>(pts.rows());
  std::vector<std::vector<int>> nb(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if ((pts.row(i) - pts.row(j)).norm() <= eps) nb[i].push_back(j);
  return nb;
}

void assign_borders_and_collect(const std::vector<std::vector<int>>& nb,
                                const std::vector<char>& core, OutlierResult& res) {
  const int n = static_cast<int>(nb.size());
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    int owner = -1;
    for (int j : nb[i])
      if (core[j]) {
        owner = j;  // neighbor lists are index-sorted, first core is lowest
        break;
      }
    res.labels[i] = owner >= 0 ? res.labels[owner] : -1;
  }
  for (int i = 0; i < n; ++i)
    if (res.labels[i] == -1) res.outliers.push_back(i);
}

}  // namespace

int dbscan_min_points(int n) {
  if (n < 1) throw Error("dbscan_min_points: empty point set");
  return std::max(3, static_cast<int>(std::ceil(std::log(static_cast<double>(n)))));
}

double estimate_epsilon(const Eigen::MatrixXd& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw Error("estimate_epsilon: k must be >= 1");
  if (n <= k) throw Error("estimate_epsilon: need more than k points");
  std::vector<double> kdist(n);
  std::vector<double> d(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) d[m++] = (points.row(i) - points.row(j)).norm();
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    kdist[i] = d[k - 1];
  }
  std::sort(kdist.begin(), kdist.end());
  if (n < 3) throw Error("estimate_epsilon: need at least 3 points for a knee");
  double best = -std::numeric_limits<double>::infinity();
  int best_i = n - 2;
  for (int i = 1; i + 1 < n; ++i) {
    double second = kdist[i + 1] - 2.0 * kdist[i] + kdist[i - 1];
    if (second >= best) {  // >= walks ties toward larger eps
      best = second;
      best_i = i;
    }
  }
  double eps = kdist[best_i];
  if (eps <= 0.0) throw Error("estimate_epsilon: degenerate point set (eps 0)");
  return eps;
}

OutlierResult dbscan_outliers(const Eigen::MatrixXd& points, int min_points, double eps) {
  if (eps <= 0.0) throw Error("dbscan_outliers: eps must be positive");
  if (min_points < 1) throw Error("dbscan_outliers: min_points must be >= 1");
  const int n = static_cast<int>(points.rows());
  OutlierResult res;
  res.eps = eps;
  res.min_points = min_points;
  res.labels.assign(n, -1);
  auto nb = neighborhoods(points, eps);
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i) core[i] = nb[i].size() >= static_cast<size_t>(min_points);

  // queue expansion over core points; border points handled afterwards so the
  // canonical lowest-core rule applies regardless of expansion order
  std::vector<char> seen(n, 0);
  for (int i = 0; i < n; ++i) {
    if (!core[i] || seen[i]) continue;
    int cluster = res.cluster_count++;
    std::deque<int> queue{i};
    seen[i] = 1;
    while (!queue.empty()) {
      int p = queue.front();
      queue.pop_front();
      res.labels[p] = cluster;
      for (int q : nb[p])
        if (core[q] && !seen[q]) {
          seen[q] = 1;
          queue.push_back(q);
        }
    }
  }
  assign_borders_and_collect(nb, core, res);
  return res;
}

OutlierResult dbscan_outliers_reference(const Eigen::MatrixXd& points, int min_points,
                                        double eps) {
  if (eps <= 0.0) throw Error("dbscan_outliers_reference: eps must be positive");
  if (min_points < 1) throw Error("dbscan_outliers_reference: min_points must be >= 1");
  const int n = static_cast<int>(points.rows());
  OutlierResult res;
  res.eps = eps;
  res.min_points = min_points;
  res.labels.assign(n, -1);
  auto nb = neighborhoods(points, eps);
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i) core[i] = nb[i].size() >= static_cast<size_t>(min_points);

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j : nb[i])
      if (core[j]) parent[find(i)] = find(j);
  }
  // number components by their lowest core index
  std::vector<int> comp_label(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    int root = find(i);
    if (comp_label[root] == -1) comp_label[root] = res.cluster_count++;
    res.labels[i] = comp_label[root];
  }
  assign_borders_and_collect(nb, core, res);
  return res;
}

}  // namespace tminer::ident
