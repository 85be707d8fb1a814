#ifndef TMF_TRANSPORT_HPP
#define TMF_TRANSPORT_HPP

// Exact optimal transport between equal-size uniform point clouds. With equal
// masses the optimal plan is a permutation, found by a shortest augmenting
// path assignment solver in O(n^3).

#include <vector>

#include "tmf/linalg.hpp"

namespace tmf {

/// n points in R^k stored as the columns of a k x n matrix.
using PointCloud = MatrixXd;

struct Assignment {
  std::vector<int> match;  // row i is matched to column match[i]
  double cost = 0.0;
};

/// Minimum-cost perfect matching for a square cost matrix.
Assignment solve_assignment(const MatrixXd& cost);

double w2_exact(const PointCloud& a, const PointCloud& b);
double w1_exact(const PointCloud& a, const PointCloud& b);

}  // namespace tmf

#endif  // TMF_TRANSPORT_HPP
