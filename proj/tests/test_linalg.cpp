#include <doctest.h>

#include "test_util.hpp"
#include "tmf/linalg.hpp"

using namespace tmf;
using tmf::test::random_matrix;

TEST_CASE("norms against brute-force loops") {
  Rng rng(1);
  const MatrixXd a = random_matrix(5, 7, rng);
  double fro = 0.0, col = 0.0;
  for (int j = 0; j < a.cols(); ++j) {
    double c = 0.0;
    for (int i = 0; i < a.rows(); ++i) c += a(i, j) * a(i, j);
    fro += c;
    col = std::max(col, std::sqrt(c));
  }
  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(fro)).epsilon(1e-14));
  CHECK(col2_norm(a) == doctest::Approx(col).epsilon(1e-14));
  CHECK(col2_norm(MatrixXd::Zero(3, 4)) == 0.0);
  CHECK(col2_norm(a) <= frobenius_norm(a));
}

TEST_CASE("vectorize stacks columns and round-trips") {
  MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  const VectorXd v = vectorize(a);
  REQUIRE(v.size() == 6);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 2; ++r) CHECK(v(c * 2 + r) == a(r, c));
  CHECK(devectorize(v, 2, 3) == a);
  CHECK_THROWS_AS(devectorize(v, 4, 2), DimensionError);
}

TEST_CASE("matmul against the triple loop") {
  Rng rng(2);
  const MatrixXd a = random_matrix(4, 6, rng), b = random_matrix(6, 3, rng);
  const MatrixXd c = matmul(a, b);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 6; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-13));
    }
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(matvec(a, VectorXd(4)), DimensionError);
  CHECK(matvec(a, VectorXd::Ones(6)).isApprox(a.rowwise().sum()));
  CHECK(transpose(a) == a.transpose());
}

TEST_CASE("axpy and finiteness") {
  VectorXd y = VectorXd::Ones(3);
  axpy(2.0, VectorXd::Constant(3, 0.5), y);
  CHECK(y == VectorXd::Constant(3, 2.0));
  VectorXd bad(2);
  CHECK_THROWS_AS(axpy(1.0, bad, y), DimensionError);
  MatrixXd m = MatrixXd::Zero(2, 2);
  CHECK(all_finite(m));
  m(1, 0) = std::nan("");
  CHECK_FALSE(all_finite(m));
  m(1, 0) = INFINITY;
  CHECK_FALSE(all_finite(m));
}
