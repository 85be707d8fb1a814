#include <doctest.h>

#include "test_util.hpp"
#include "tmf/data.hpp"
#include "tmf/flow.hpp"
#include "tmf/model.hpp"

using namespace tmf;
using namespace tmf::test;

namespace {

DataSet small_data(int d, int N, std::size_t n, std::uint64_t seed) {
  return generate(random_task(d, N, 1.0, 1.0, seed), n, seed + 1);
}

ParamEnsemble<double> random_theta(int L, int M, int D, int m, std::uint64_t seed, double R = 1.5) {
  return init_ensemble(L, M, D, m, R, seed);
}

}  // namespace

TEST_CASE("zero ensemble is the identity map") {
  const auto ds = small_data(2, 3, 2, 1);
  const auto theta = ParamEnsemble<double>::zeros(3, 2, 4, 8);
  const auto tr = forward<double>(ds.samples[0].H, theta);
  REQUIRE(tr.states.size() == 7);
  for (const auto& s : tr.states) CHECK(s == ds.samples[0].H);
  CHECK(readout(tr.output(), ds.readout_row) == 0.0);  // the query label slot is zeroed
}

TEST_CASE("forward matches a hand-rolled residual recursion") {
  Rng rng(2);
  const auto ds = small_data(2, 3, 1, 2);
  const auto theta = random_theta(2, 3, 4, 8, 3);
  MatrixXd t = ds.samples[0].H;
  const double step = 0.5 / 2 / 3;  // (dt / 2) / M with L = 2, M = 3
  for (int l = 0; l < 2; ++l) {
    MatrixXd acc = MatrixXd::Zero(4, 4);
    for (int j = 0; j < 3; ++j) acc += attn_f(t, theta.at(l, j).attn);
    t += step * acc;
    acc.setZero();
    for (int j = 0; j < 3; ++j) acc += mlp_h(t, theta.at(l, j).mlp);
    t += step * acc;
  }
  CHECK(forward<double>(ds.samples[0].H, theta).output().isApprox(t, 1e-14));
  CHECK(forward_from<double>(ds.samples[0].H, theta, 0).isApprox(t, 1e-14));
}

TEST_CASE("objective of one unit particle on zero-risk data is lambda / 2") {
  const auto ds = zero_risk_dataset(2, 3, 4);
  auto theta = ParamEnsemble<double>::zeros(1, 1, 4, 8);
  theta.particles[0].attn.V(0, 0) = 1.0;
  CHECK(risk(ds, theta) == 0.0);
  CHECK(objective(ds, theta, 0.3) == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("zero-risk gradient is exactly lambda beta") {
  const auto ds = zero_risk_dataset(2, 3, 3);
  const auto theta = random_theta(3, 2, 4, 8, 5);
  const auto g = param_gradient(ds, theta, 0.25);
  for (std::size_t i = 0; i < theta.size(); ++i)
    CHECK(g.particles[i].flatten().isApprox(0.25 * theta.particles[i].flatten(), 1e-15));
}

TEST_CASE("ML-scaled finite differences of Q match the analytic gradient") {
  const int L = 3, M = 2, D = 4, m = 8;
  const auto ds = small_data(2, 3, 3, 7);
  const auto theta = random_theta(L, M, D, m, 11);
  const double lambda = 1e-2;
  const auto g = param_gradient(ds, theta, lambda);
  const auto theta_l = theta.cast<LD>();
  const auto branches = activation_branches(ds, theta);
  const LD h = 1e-6L;
  int checked = 0;
  double worst = 0.0;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const VecL base = theta_l.particles[p].flatten();
    const VectorXd gp = g.particles[p].flatten();
    for (Eigen::Index c = 0; c < base.size(); c += 3) {
      auto at = [&](LD delta) {
        auto t = theta_l;
        VecL v = base;
        v(c) += delta;
        t.particles[p] = ParticleParam<LD>::unflatten(v, D, m);
        return t;
      };
      const auto tp = at(h), tm = at(-h);
      if (activation_branches(ds, tp.cast<double>()) != branches ||
          activation_branches(ds, tm.cast<double>()) != branches)
        continue;
      const LD fd = (objective(ds, tp, LD(lambda)) - objective(ds, tm, LD(lambda))) / (2 * h) * LD(L * M);
      const double err = std::abs(gp(c) - static_cast<double>(fd)) / std::max(std::abs(static_cast<double>(fd)), 1e-6);
      worst = std::max(worst, err);
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(worst < 1e-6);
}

TEST_CASE("adjoint at every half-step matches truncated-forward directional derivatives") {
  const auto ds = small_data(2, 3, 1, 13);
  const auto theta = random_theta(3, 2, 4, 8, 17);
  const auto& s = ds.samples[0];
  const auto tr = forward<double>(s.H, theta);
  const auto adj = backward(s.y, tr, theta, ds.readout_row);
  const auto theta_l = theta.cast<LD>();
  Rng rng(19);
  for (int k = 0; k <= 2 * theta.L; ++k) {
    const MatrixXd dir = random_matrix(4, 4, rng);
    auto r_of = [&](LD eps) {
      const MatL z = tr.states[k].cast<LD>() + eps * dir.cast<LD>();
      const LD res = readout(forward_from<LD>(z, theta_l, k), ds.readout_row) - LD(s.y);
      return res * res / 2;
    };
    const LD h = 1e-6L;
    const double fd = static_cast<double>((r_of(h) - r_of(-h)) / (2 * h));
    const double an = adj.adjoints[k].cwiseProduct(dir).sum();
    CHECK(std::abs(an - fd) <= 1e-7 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("relabeling heads within a layer permutes the gradient") {
  const auto ds = small_data(2, 3, 3, 23);
  const auto theta = random_theta(2, 3, 4, 8, 29);
  auto perm = theta;
  std::swap(perm.at(1, 0), perm.at(1, 2));
  const auto ev = evaluate(ds, theta, 1e-3);
  const auto ep = evaluate(ds, perm, 1e-3);
  CHECK(ep.risk == doctest::Approx(ev.risk).epsilon(1e-14));
  CHECK(ep.gradient.at(1, 0).flatten().isApprox(ev.gradient.at(1, 2).flatten(), 1e-13));
  CHECK(ep.gradient.at(0, 1).flatten().isApprox(ev.gradient.at(0, 1).flatten(), 1e-13));
}

TEST_CASE("evaluation is deterministic") {
  const auto ds = small_data(2, 3, 4, 31);
  const auto theta = random_theta(2, 2, 4, 8, 37);
  const auto a = evaluate(ds, theta, 1e-3);
  const auto b = evaluate(ds, theta, 1e-3);
  CHECK(a.objective == b.objective);
  for (std::size_t i = 0; i < theta.size(); ++i)
    CHECK(a.gradient.particles[i].flatten() == b.gradient.particles[i].flatten());
}

TEST_CASE("blow-ups and bad shapes are reported") {
  const auto ds = small_data(2, 3, 1, 41);
  auto theta = random_theta(2, 1, 4, 8, 43);
  theta.at(1, 0).attn.V(0, 0) = INFINITY;
  try {
    forward<double>(ds.samples[0].H, theta);
    FAIL("expected divergence");
  } catch (const NumericalDivergence& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  const auto ok = random_theta(2, 1, 5, 8, 43);
  CHECK_THROWS_AS(forward<double>(ds.samples[0].H, ok), DimensionError);
  CHECK_THROWS_AS(readout(ds.samples[0].H, 9), DimensionError);
}
