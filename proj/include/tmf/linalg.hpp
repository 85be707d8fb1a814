#ifndef TMF_LINALG_HPP
#define TMF_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>

#include "tmf/errors.hpp"

namespace tmf {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// A D x (N+1) token matrix: one column per token.
template <typename Scalar>
using TokenMatrix = Mat<Scalar>;

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& a) {
  return a.norm();
}

/// Largest column l2 norm (the token-wise norm).
template <typename Derived>
typename Derived::Scalar col2_norm(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Scalar best(0);
  for (Eigen::Index j = 0; j < a.cols(); ++j) best = std::max(best, a.col(j).norm());
  return best;
}

/// Column stacking: entry (r, c) lands at index c * rows + r.
template <typename Derived>
Vec<typename Derived::Scalar> vectorize(const Eigen::MatrixBase<Derived>& a) {
  return a.reshaped();
}

template <typename Derived>
Mat<typename Derived::Scalar> devectorize(const Eigen::MatrixBase<Derived>& v, Eigen::Index rows,
                                          Eigen::Index cols) {
  require_shape(v.cols() == 1 && v.rows() == rows * cols, "devectorize");
  return v.reshaped(rows, cols);
}

template <typename A, typename B>
Mat<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_shape(a.cols() == b.rows(), "matmul");
  return a * b;
}

template <typename A, typename B>
Vec<typename A::Scalar> matvec(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& x) {
  require_shape(x.cols() == 1 && a.cols() == x.rows(), "matvec");
  return a * x;
}

template <typename A>
Mat<typename A::Scalar> transpose(const Eigen::MatrixBase<A>& a) {
  return a.transpose();
}

/// y <- alpha * x + y
template <typename X, typename Y>
void axpy(typename X::Scalar alpha, const Eigen::MatrixBase<X>& x, Eigen::MatrixBase<Y>& y) {
  require_shape(x.rows() == y.rows() && x.cols() == y.cols(), "axpy");
  y.derived() += alpha * x;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  return a.allFinite();
}

}  // namespace tmf

#endif  // TMF_LINALG_HPP
