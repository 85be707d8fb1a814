#include <doctest.h>

#include <sstream>

#include "tmf/flow.hpp"

using namespace tmf;

TEST_CASE("zero-risk flow decays every particle exponentially") {
  const auto ds = zero_risk_dataset(2, 3, 2);
  const auto theta0 = init_ensemble(2, 3, 4, 8, 1.0, 1);
  FlowConfig cfg;
  cfg.lambda = 2.0;
  cfg.dtau = 1e-3;
  cfg.tau_end = 0.5;
  const auto out = run_flow(ds, theta0, cfg);
  const double exact = std::exp(-cfg.lambda * cfg.tau_end);
  // Euler: (1 - lambda h)^n = e^{-lambda tau} (1 + O(lambda^2 h tau)).
  const double euler_err = cfg.lambda * cfg.lambda * cfg.dtau * cfg.tau_end;
  for (std::size_t i = 0; i < theta0.size(); ++i) {
    const double ratio = out.final_theta.particles[i].norm() / theta0.particles[i].norm();
    CHECK(std::abs(ratio - exact) <= euler_err * exact);
  }
  CHECK(out.log.records.size() == 501);
  CHECK(out.log.records.back().risk == 0.0);
}

TEST_CASE("vanishing drift freezes the ensemble") {
  const auto ds = zero_risk_dataset(2, 3, 2);
  const auto theta0 = init_ensemble(2, 2, 4, 8, 1.0, 2);
  FlowConfig cfg;
  cfg.lambda = 0.0;
  cfg.tau_end = 0.05;
  const auto out = run_flow(ds, theta0, cfg);
  for (std::size_t i = 0; i < theta0.size(); ++i)
    CHECK(out.final_theta.particles[i].flatten() == theta0.particles[i].flatten());
  CHECK(out.log.halvings == 0);
}

TEST_CASE("objective never rises on a random in-context instance") {
  const auto ds = generate(random_task(2, 4, 1.0, 1.0, 3), 16, 4);
  const auto theta0 = init_ensemble(4, 4, 4, 8, 1.0, 5);
  FlowConfig cfg;
  cfg.lambda = 1e-3;
  cfg.dtau = 1e-3;
  cfg.tau_end = 0.5;
  const auto out = run_flow(ds, theta0, cfg);
  REQUIRE(out.log.records.size() == 501);
  for (std::size_t i = 1; i < out.log.records.size(); ++i)
    CHECK(out.log.records[i].objective <= out.log.records[i - 1].objective + cfg.guard_tol);
  CHECK(out.log.guard_violations == 0);
  CHECK(out.log.records.back().objective < out.log.records.front().objective);
}

TEST_CASE("relabeling heads permutes the trajectory") {
  const auto ds = generate(random_task(2, 3, 1.0, 1.0, 6), 8, 7);
  const auto theta0 = init_ensemble(2, 3, 4, 8, 1.0, 8);
  auto perm0 = theta0;
  std::swap(perm0.at(0, 0), perm0.at(0, 1));
  std::swap(perm0.at(1, 1), perm0.at(1, 2));
  FlowConfig cfg;
  cfg.lambda = 1e-2;
  cfg.tau_end = 0.02;
  cfg.dtau = 1e-3;
  const auto a = run_flow(ds, theta0, cfg), b = run_flow(ds, perm0, cfg);
  CHECK(b.final_theta.at(0, 1).flatten().isApprox(a.final_theta.at(0, 0).flatten(), 1e-12));
  CHECK(b.final_theta.at(1, 2).flatten().isApprox(a.final_theta.at(1, 1).flatten(), 1e-12));
  CHECK(b.final_theta.at(1, 0).flatten().isApprox(a.final_theta.at(1, 0).flatten(), 1e-12));
  // Bitwise determinism.
  const auto again = run_flow(ds, theta0, cfg);
  for (std::size_t i = 0; i < theta0.size(); ++i)
    CHECK(again.final_theta.particles[i].flatten() == a.final_theta.particles[i].flatten());
}

TEST_CASE("flow log CSV and snapshots") {
  const auto ds = zero_risk_dataset(2, 3, 1);
  FlowConfig cfg;
  cfg.lambda = 1.0;
  cfg.tau_end = 0.01;
  cfg.dtau = 1e-3;
  cfg.snapshot_every = 5;
  const auto out = run_flow(ds, init_ensemble(1, 2, 4, 8, 1.0, 9), cfg);
  CHECK(out.snapshots.size() == 3);
  CHECK(out.snapshots[1].first == doctest::Approx(0.005));
  std::ostringstream os;
  write_flow_csv(os, out.log);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "tau,objective,risk,mean_sq_norm,max_norm,grad_norm");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 11);
}

TEST_CASE("config validation and ceilings") {
  FlowConfig cfg;
  cfg.dtau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dtau = 2.0;
  cfg.tau_end = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dtau = 1e-3;
  cfg.radius = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(moment_ceiling(1.0, 1.0, 1.0, 0.0) == INFINITY);
  CHECK(moment_ceiling(1.0, 1.0, 0.0, 1.0) == doctest::Approx(5.0));
  CHECK(moment_ceiling(2.0, 0.5, 1.0, 0.1) ==
        doctest::Approx(4.0 + (0.5 + 0.5 * std::exp(14.0)) / 0.1));
  CHECK(output_ceiling(2.0, 1.0, 0.0) == doctest::Approx(2.0 * std::exp(1.0)));
}
