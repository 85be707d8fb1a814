#include <doctest.h>

#include "tmf/data.hpp"

using namespace tmf;

TEST_CASE("prompt layout") {
  const auto task = random_task(2, 3, 0.8, 1.0, 1);
  CHECK(task.coef.norm() == doctest::Approx(0.8).epsilon(1e-14));
  MatrixXd xs(2, 4);
  xs << 0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8;
  const auto s = make_sample(xs, linear_labels(task));
  REQUIRE(s.H.rows() == 4);
  REQUIRE(s.H.cols() == 4);
  CHECK(s.H.topRows(2) == xs);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.H(2, i) == doctest::Approx(task.coef.dot(xs.col(i))));
    CHECK(s.H(3, i) == 0.0);
  }
  CHECK(s.H(2, 3) == 0.0);
  CHECK(s.H(3, 3) == 1.0);
  CHECK(s.y == doctest::Approx(task.coef.dot(xs.col(3))));
}

TEST_CASE("generated data satisfy the regularity witnesses") {
  const auto task = random_task(3, 5, 1.0, 1.0, 2);
  const auto ds = generate(task, 64, 3);
  CHECK(ds.size() == 64);
  CHECK(ds.D == 5);
  CHECK(ds.readout_row == 3);
  const auto rep = check_regularity(ds);
  CHECK(rep.pass);
  CHECK(rep.bound_hat <= ds.bound);
  CHECK(rep.lipschitz_hat <= ds.lipschitz + 1e-12);
  CHECK(rep.lipschitz_hat > 0.0);
}

TEST_CASE("regularity check rejects a bound that is too small") {
  auto ds = generate(random_task(2, 3, 1.0, 1.0, 4), 16, 5);
  ds.bound = 0.01;
  CHECK_FALSE(check_regularity(ds).pass);
}

TEST_CASE("zero-risk data and determinism") {
  const auto z = zero_risk_dataset(2, 4, 3);
  for (const auto& s : z.samples) {
    CHECK(s.H.isZero(0));
    CHECK(s.y == 0.0);
  }
  const auto task = random_task(2, 4, 1.0, 1.0, 6);
  const auto a = generate(task, 8, 7), b = generate(task, 8, 7), c = generate(task, 8, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.samples[i].H == b.samples[i].H);
  CHECK(a.samples[0].H != c.samples[0].H);
}

TEST_CASE("dataset JSON round trip") {
  const auto ds = generate(random_task(2, 3, 1.0, 1.0, 9), 4, 10);
  const auto back = dataset_from_json(nlohmann::json::parse(to_json(ds).dump()));
  REQUIRE(back.size() == ds.size());
  CHECK(back.readout_row == ds.readout_row);
  CHECK(back.seed == ds.seed);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].H == ds.samples[i].H);
    CHECK(back.samples[i].y == ds.samples[i].y);
  }
  auto bad = to_json(ds);
  bad["samples"][0]["H"][1].push_back(1.0);
  CHECK_THROWS(dataset_from_json(bad));
}
