#include <doctest.h>

#include "test_util.hpp"
#include "tmf/data.hpp"
#include "tmf/flow.hpp"
#include "tmf/meanfield.hpp"

using namespace tmf;
using namespace tmf::test;

namespace {

DataSet small_data(std::size_t n, std::uint64_t seed) {
  return generate(random_task(2, 3, 1.0, 1.0, seed), n, seed + 1);
}

// Composite Simpson rule over the grid points of one knot.
template <typename F>
double simpson_over_knot(const F& value_at, int knot, int per_knot, int steps) {
  double total = 0.0;
  for (int i = 0; i <= per_knot; ++i) {
    const double w = (i == 0 || i == per_knot) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    total += w * value_at(static_cast<double>(knot * per_knot + i) / steps);
  }
  return total / (3.0 * steps);
}

}  // namespace

TEST_CASE("zero distribution leaves the input unchanged") {
  const auto ds = small_data(1, 1);
  const auto rho = SlicedDistribution<double>::from_ensemble(ParamEnsemble<double>::zeros(4, 3, 4, 8));
  const auto tr = continuous_forward<double>(ds.samples[0].H, rho, 16);
  for (const auto& s : tr.states) CHECK(s == ds.samples[0].H);
  CHECK_THROWS_AS(continuous_forward<double>(ds.samples[0].H, rho, 10), DimensionError);
}

TEST_CASE("RK4 converges at fourth order") {
  const auto ds = small_data(1, 2);
  const MatrixXd& h = ds.samples[0].H;
  const auto full = sample_rho0(2, 3, 4, 8, 2.0, 3);
  // The HuberizedReLU field is only C1, which caps the order; with W1 = 0
  // the drift is attention only and smooth.
  auto rho = full;
  for (auto& p : rho.particles) p.mlp.W1.setZero();
  const MatrixXd ref = continuous_forward<double>(h, rho, 2 * 128).output();
  const double e4 = (continuous_forward<double>(h, rho, 2 * 4).output() - ref).norm();
  const double e8 = (continuous_forward<double>(h, rho, 2 * 8).output() - ref).norm();
  REQUIRE(e8 > 0.0);
  CHECK(e4 / e8 > 10.0);
  CHECK(e4 / e8 < 24.0);
  const MatrixXd ref_full = continuous_forward<double>(h, full, 2 * 128).output();
  const double f4 = (continuous_forward<double>(h, full, 2 * 4).output() - ref_full).norm();
  const double f16 = (continuous_forward<double>(h, full, 2 * 16).output() - ref_full).norm();
  CHECK(f4 / f16 > 16.0);  // at least second order
  CHECK(continuous_forward_from<double>(h, rho, 16, 0).isApprox(continuous_forward<double>(h, rho, 16).output(), 1e-14));
}

TEST_CASE("discrete model approaches the continuous one as depth grows") {
  const auto ds = small_data(1, 4);
  const MatrixXd& h = ds.samples[0].H;
  const auto rho16 = sample_rho0(1, 4, 4, 8, 1.5, 5);
  // Depth-constant distribution: the same 4 particles at every knot.
  auto replicate = [&](int L) {
    std::vector<ParticleParam<double>> parts;
    for (int l = 0; l < L; ++l) parts.insert(parts.end(), rho16.particles.begin(), rho16.particles.end());
    return SlicedDistribution<double>::uniform(L, 4, 4, 8, parts);
  };
  const MatrixXd ref = continuous_forward<double>(h, replicate(1), 64).output();
  double prev = INFINITY;
  for (int L : {4, 8, 16, 32}) {
    const double err = (forward<double>(h, replicate(L).as_ensemble()).output() - ref).norm();
    CHECK(err < prev);
    if (L > 4) CHECK(prev / err > 1.6);  // first order in 1/L
    prev = err;
  }
}

TEST_CASE("continuous adjoint is the exact sensitivity of the RK4 solution") {
  const auto ds = small_data(1, 6);
  const auto rho = sample_rho0(2, 2, 4, 8, 1.5, 7);
  const auto& s = ds.samples[0];
  const int steps = 8;
  const auto tr = continuous_forward<double>(s.H, rho, steps);
  const auto adj = continuous_backward(s.y, tr, rho, ds.readout_row);
  const auto rho_l = rho.cast<LD>();
  Rng rng(8);
  for (int n = 0; n <= steps; ++n) {
    const MatrixXd dir = random_matrix(4, 4, rng);
    auto r_of = [&](LD eps) {
      const MatL z = tr.states[n].cast<LD>() + eps * dir.cast<LD>();
      const LD r = readout(continuous_forward_from<LD>(z, rho_l, steps, n), ds.readout_row) - LD(s.y);
      return r * r / 2;
    };
    const double fd = static_cast<double>((r_of(1e-6L) - r_of(-1e-6L)) / 2e-6L);
    CHECK(std::abs(adj.adjoints[n].cwiseProduct(dir).sum() - fd) <= 1e-7 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("knot drift equals S / w times the particle derivative of Q") {
  const auto ds = small_data(2, 9);
  const auto rho = sample_rho0(2, 2, 4, 8, 1.5, 10);
  const double lambda = 0.05;
  const int spk = 4;
  const auto ev = meanfield_evaluate<double>(ds, rho, lambda, spk, true);
  const auto rho_l = rho.cast<LD>();
  const std::size_t idx = rho.index(1, 0);
  const VecL base = rho_l.particles[idx].flatten();
  double worst = 0.0;
  for (Eigen::Index c = 0; c < base.size(); c += 5) {
    auto q = [&](LD delta) {
      auto r = rho_l;
      VecL v = base;
      v(c) += delta;
      r.particles[idx] = ParticleParam<LD>::unflatten(v, 4, 8);
      return meanfield_objective<LD>(ds, r, LD(lambda), spk);
    };
    const double fd = static_cast<double>((q(1e-6L) - q(-1e-6L)) / 2e-6L) * rho.S / rho.weight(1, 0);
    const double an = ev.drift[idx].flatten()(c);
    worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-6));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("pointwise drift averages to the knot drift") {
  const auto ds = small_data(2, 11);
  const auto rho = sample_rho0(2, 3, 4, 8, 1.5, 12);
  const int spk = 16, steps = 2 * spk;
  const double lambda = 0.1;
  const auto ev = meanfield_evaluate<double>(ds, rho, lambda, spk, true);
  for (int knot = 0; knot < 2; ++knot) {
    const auto& beta = rho.at(knot, 1);
    const VectorXd expect = ev.drift[rho.index(knot, 1)].flatten();
    VectorXd avg = VectorXd::Zero(expect.size());
    for (Eigen::Index c = 0; c < avg.size(); ++c)
      avg(c) = rho.S * simpson_over_knot(
                           [&](double t) { return particle_drift(ev, lambda, beta, t).flatten()(c); },
                           knot, spk, steps);
    CHECK(max_rel_err(avg, expect) < 1e-4);
  }
  CHECK_THROWS(particle_drift(ev, lambda, rho.at(0, 0), 0.01));
}

TEST_CASE("functional derivative matches a mixture perturbation") {
  const auto ds = small_data(2, 13);
  const auto base = sample_rho0(2, 3, 4, 8, 1.5, 14);
  Rng rng(15);
  const auto beta = sample_particle(4, 8, 1.5, rng);
  const int knot = 1, spk = 16, steps = 2 * spk;
  const double lambda = 0.2;
  // rho_eps puts mass eps on beta at one knot and (1 - eps) on the old particles.
  std::vector<ParticleParam<double>> parts;
  std::vector<double> weights;
  for (int s = 0; s < 2; ++s) {
    for (int k = 0; k < 3; ++k) {
      parts.push_back(base.at(s, k));
      weights.push_back(1.0 / 3);
    }
    parts.push_back(beta);
    weights.push_back(0.0);
  }
  auto mixture = [&](LD eps) {
    SlicedDistribution<LD> r{2, 4, 4, 8, {}, {}};
    for (std::size_t i = 0; i < parts.size(); ++i) {
      r.particles.push_back(parts[i].cast<LD>());
      const bool in_knot = static_cast<int>(i / 4) == knot;
      LD w = weights[i];
      if (in_knot) w = (i % 4 == 3) ? eps : (1 - eps) * w;
      r.weights.push_back(w);
    }
    return r;
  };
  const double fd = static_cast<double>(
      (meanfield_objective<LD>(ds, mixture(1e-6L), LD(lambda), spk) -
       meanfield_objective<LD>(ds, mixture(-1e-6L), LD(lambda), spk)) / 2e-6L);
  const auto rho0 = mixture(0).cast<double>();
  const auto ev = meanfield_evaluate<double>(ds, rho0, lambda, spk, false, true);
  auto dq = [&](double t) {
    double mean = 0.0;
    for (int k = 0; k < 3; ++k) mean += functional_gradient(ev, lambda, rho0.at(knot, k), t) / 3;
    return functional_gradient(ev, lambda, beta, t) - mean;
  };
  const double quad = simpson_over_knot(dq, knot, spk, steps);
  CHECK(std::abs(quad - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3));
}

TEST_CASE("mean-field flow: decay on zero-risk data and dissipation") {
  const auto zero = zero_risk_dataset(2, 3, 2);
  const auto rho = sample_rho0(2, 2, 4, 8, 1.0, 16);
  MeanFieldFlowConfig cfg;
  cfg.lambda = 0.5;
  cfg.tau_end = 0.4;
  cfg.dtau = 1e-3;
  cfg.steps_per_knot = 2;
  const auto out = meanfield_flow(zero, rho, cfg);
  const double factor = std::pow(1 - cfg.dtau * cfg.lambda, 400);
  for (std::size_t i = 0; i < rho.size(); ++i)
    CHECK(out.final_rho.particles[i].flatten().isApprox(factor * rho.particles[i].flatten(), 1e-12));
  CHECK(factor == doctest::Approx(std::exp(-0.2)).epsilon(1e-3));

  const auto ds = small_data(4, 17);
  cfg.lambda = 1e-3;
  cfg.tau_end = 0.05;
  const auto live = meanfield_flow(ds, sample_rho0(2, 2, 4, 8, 1.5, 18), cfg);
  REQUIRE(live.log.records.size() == 51);
  for (std::size_t i = 1; i < live.log.records.size(); ++i)
    CHECK(live.log.records[i].objective <= live.log.records[i - 1].objective + 1e-10);
  CHECK(live.log.records.back().objective < live.log.records.front().objective);
}
