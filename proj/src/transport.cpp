#include "tmf/transport.hpp"

#include <cmath>
#include <limits>

#include "tmf/errors.hpp"

namespace tmf {

Assignment solve_assignment(const MatrixXd& cost) {
  require_shape(cost.rows() == cost.cols(), "assignment cost must be square");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials u (rows), v (cols); way[] stores the augmenting tree.
  // Index 0 is a sentinel column, real rows/cols are 1-based.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> col_owner(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_owner[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        // Strict comparison keeps the lowest index on ties.
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[col_owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[j0] != 0);
    do {
      const int j1 = way[j0];
      col_owner[j0] = col_owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.match.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.match[col_owner[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.match[i]);
  return out;
}

namespace {
MatrixXd pairwise_sq_dist(const PointCloud& a, const PointCloud& b) {
  require_shape(a.cols() == b.cols(), "point clouds must have equal size");
  require_shape(a.rows() == b.rows(), "point clouds must share a dimension");
  if (a.cols() == 0) throw DimensionError("point clouds must be nonempty");
  MatrixXd c(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) = (a.col(i) - b.col(j)).squaredNorm();
  return c;
}
}  // namespace

double w2_exact(const PointCloud& a, const PointCloud& b) {
  const MatrixXd c = pairwise_sq_dist(a, b);
  const Assignment asg = solve_assignment(c);
  return std::sqrt(std::max(0.0, asg.cost / static_cast<double>(a.cols())));
}

double w1_exact(const PointCloud& a, const PointCloud& b) {
  const MatrixXd c = pairwise_sq_dist(a, b).cwiseSqrt();
  const Assignment asg = solve_assignment(c);
  return asg.cost / static_cast<double>(a.cols());
}

}  // namespace tmf
