#ifndef TMF_MEANFIELD_HPP
#define TMF_MEANFIELD_HPP

// Mean-field (continuous-depth) transformer in particle form.
//
// rho(., t) is piecewise constant in t: knot s covers [s/S, (s+1)/S) and holds
// P weighted particles. The state follows
//
//   dT/dt = sum_k w_k g(T, beta_{s,k}),   g = (f + h) / 2,   T(0) = H,
//
// integrated with classical RK4 on a uniform grid aligned with the knots.
// The adjoint p(t) = dR(H)/dT(t) comes from reverse-mode differentiation of
// the RK4 steps, which is itself a fourth-order scheme for the backward
// adjoint equation dp/dt = -J(t)^T p with p(1) = residual * E_read; it is the
// exact gradient of the discretized objective, so the flow's energy identity
// holds up to the Euler error in tau.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tmf/data.hpp"
#include "tmf/encoders.hpp"
#include "tmf/flow_log.hpp"
#include "tmf/model.hpp"
#include "tmf/sampling.hpp"

namespace tmf {

template <typename Scalar>
struct SlicedDistribution {
  int S = 0;  // depth knots
  int P = 0;  // particles per knot
  Eigen::Index D = 0;
  Eigen::Index hidden = 0;
  std::vector<ParticleParam<Scalar>> particles;  // knot-major: (s, k) -> s * P + k
  std::vector<Scalar> weights;                   // per particle, each knot sums to 1

  std::size_t size() const { return particles.size(); }
  std::size_t index(int knot, int k) const { return static_cast<std::size_t>(knot) * P + k; }
  ParticleParam<Scalar>& at(int knot, int k) { return particles[index(knot, k)]; }
  const ParticleParam<Scalar>& at(int knot, int k) const { return particles[index(knot, k)]; }
  Scalar weight(int knot, int k) const { return weights[index(knot, k)]; }

  int knot_of(double t) const {
    const int s = static_cast<int>(std::floor(t * S));
    return std::clamp(s, 0, S - 1);
  }

  bool uniform_weights() const {
    for (const auto& w : weights)
      if (w != Scalar(1) / Scalar(P)) return false;
    return true;
  }

  /// int_0^1 int ||beta||^2 rho(beta, t) dbeta dt
  Scalar second_moment() const {
    Scalar total(0);
    for (std::size_t i = 0; i < particles.size(); ++i)
      total += weights[i] * particles[i].squared_norm();
    return total / Scalar(S);
  }

  void validate() const {
    require_shape(S > 0 && P > 0 && particles.size() == static_cast<std::size_t>(S) * P &&
                      weights.size() == particles.size(),
                  "sliced distribution grid");
    for (const auto& p : particles)
      require_shape(p.D() == D && p.hidden() == hidden, "sliced particle shape");
  }

  static SlicedDistribution uniform(int knots, int per_knot, Eigen::Index dim, Eigen::Index hid,
                                    std::vector<ParticleParam<Scalar>> parts) {
    SlicedDistribution rho{knots, per_knot, dim, hid, std::move(parts), {}};
    rho.weights.assign(rho.particles.size(), Scalar(1) / Scalar(per_knot));
    rho.validate();
    return rho;
  }

  /// Knot s becomes layer s, particle k becomes head k.
  ParamEnsemble<Scalar> as_ensemble() const {
    return ParamEnsemble<Scalar>{S, P, D, hidden, particles};
  }
  static SlicedDistribution from_ensemble(const ParamEnsemble<Scalar>& e) {
    return uniform(e.L, e.M, e.D, e.hidden, e.particles);
  }

  template <typename Other>
  SlicedDistribution<Other> cast() const {
    SlicedDistribution<Other> out{S, P, D, hidden, {}, {}};
    for (const auto& p : particles) out.particles.push_back(p.template cast<Other>());
    for (const auto& w : weights) out.weights.push_back(static_cast<Other>(w));
    return out;
  }
};

/// S x P i.i.d. particles uniform on the ball ||beta|| <= R.
inline SlicedDistribution<double> sample_rho0(int S, int P, Eigen::Index D, Eigen::Index hidden,
                                              double R, std::uint64_t seed) {
  if (!(R > 0)) throw ConfigError("rho0 radius must be positive");
  Rng rng(seed);
  std::vector<ParticleParam<double>> parts;
  parts.reserve(static_cast<std::size_t>(S) * P);
  for (int i = 0; i < S * P; ++i) parts.push_back(sample_particle(D, hidden, R, rng));
  return SlicedDistribution<double>::uniform(S, P, D, hidden, std::move(parts));
}

template <typename Scalar>
struct ContinuousTrace {
  int steps = 0;
  int steps_per_knot = 0;
  std::vector<Mat<Scalar>> states;  // steps + 1 grid states, states[0] = H
  std::vector<Mat<Scalar>> stages;  // RK4 stage inputs Y2, Y3, Y4 of each step
  Scalar step_size() const { return Scalar(1) / Scalar(steps); }
  const Mat<Scalar>& output() const { return states.back(); }
};

template <typename Scalar>
struct ContinuousAdjoint {
  std::vector<Mat<Scalar>> adjoints;  // p at the steps + 1 grid points
};

namespace detail {
template <typename Scalar>
Mat<Scalar> knot_drift(const Mat<Scalar>& z, const SlicedDistribution<Scalar>& rho, int knot) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(z.rows(), z.cols());
  for (int k = 0; k < rho.P; ++k) {
    const auto& b = rho.at(knot, k);
    acc += rho.weight(knot, k) * (attn_f(z, b.attn) + mlp_h(z, b.mlp));
  }
  return acc / Scalar(2);
}

/// Transposed knot-drift Jacobian applied to u. With grads non-null, adds
/// grad_beta Tr(g(z, beta)^T u) for every particle of the knot.
template <typename Scalar>
Mat<Scalar> knot_drift_vjp(const Mat<Scalar>& z, const SlicedDistribution<Scalar>& rho, int knot,
                           const Mat<Scalar>& u, std::vector<ParticleParam<Scalar>>* grads) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(z.rows(), z.cols());
  const bool want_param = grads != nullptr;
  const Scalar half(0.5);
  for (int k = 0; k < rho.P; ++k) {
    const auto& b = rho.at(knot, k);
    auto va = attn_vjp(z, b.attn, u, true, want_param);
    auto vm = mlp_vjp(z, b.mlp, u, true, want_param);
    acc += rho.weight(knot, k) * (va.dZ + vm.dZ);
    if (want_param) {
      auto& g = (*grads)[rho.index(knot, k)];
      g.attn.V += half * va.dtheta.V;
      g.attn.W += half * va.dtheta.W;
      g.mlp.W1 += half * vm.dw.W1;
      g.mlp.W2 += half * vm.dw.W2;
    }
  }
  return acc / Scalar(2);
}
}  // namespace detail

template <typename Scalar>
ContinuousTrace<Scalar> continuous_forward(const Mat<Scalar>& h,
                                           const SlicedDistribution<Scalar>& rho, int steps) {
  rho.validate();
  require_shape(h.rows() == rho.D, "continuous forward input");
  if (steps <= 0 || steps % rho.S != 0)
    throw DimensionError("RK4 steps must be a positive multiple of the knot count");
  ContinuousTrace<Scalar> tr;
  tr.steps = steps;
  tr.steps_per_knot = steps / rho.S;
  tr.states.reserve(steps + 1);
  tr.stages.reserve(3 * static_cast<std::size_t>(steps));
  tr.states.push_back(h);
  const Scalar dt = tr.step_size();
  for (int n = 0; n < steps; ++n) {
    const int knot = n / tr.steps_per_knot;
    const Mat<Scalar>& y1 = tr.states.back();
    const Mat<Scalar> k1 = detail::knot_drift(y1, rho, knot);
    Mat<Scalar> y2 = y1 + (dt / 2) * k1;
    const Mat<Scalar> k2 = detail::knot_drift(y2, rho, knot);
    Mat<Scalar> y3 = y1 + (dt / 2) * k2;
    const Mat<Scalar> k3 = detail::knot_drift(y3, rho, knot);
    Mat<Scalar> y4 = y1 + dt * k3;
    const Mat<Scalar> k4 = detail::knot_drift(y4, rho, knot);
    Mat<Scalar> next = y1 + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!next.allFinite())
      throw NumericalDivergence("non-finite continuous state at step " + std::to_string(n));
    tr.stages.push_back(std::move(y2));
    tr.stages.push_back(std::move(y3));
    tr.stages.push_back(std::move(y4));
    tr.states.push_back(std::move(next));
  }
  return tr;
}

/// Integrates from grid step n0 (z standing in for T at t = n0 / steps) to
/// t = 1 with the same RK4 grid and returns the final state.
template <typename Scalar>
Mat<Scalar> continuous_forward_from(const Mat<Scalar>& z, const SlicedDistribution<Scalar>& rho,
                                    int steps, int n0) {
  if (steps <= 0 || steps % rho.S != 0)
    throw DimensionError("RK4 steps must be a positive multiple of the knot count");
  require_shape(n0 >= 0 && n0 <= steps, "grid step index");
  const int per_knot = steps / rho.S;
  const Scalar dt = Scalar(1) / Scalar(steps);
  Mat<Scalar> y = z;
  for (int n = n0; n < steps; ++n) {
    const int knot = n / per_knot;
    const Mat<Scalar> k1 = detail::knot_drift(y, rho, knot);
    const Mat<Scalar> k2 = detail::knot_drift((y + (dt / 2) * k1).eval(), rho, knot);
    const Mat<Scalar> k3 = detail::knot_drift((y + (dt / 2) * k2).eval(), rho, knot);
    const Mat<Scalar> k4 = detail::knot_drift((y + dt * k3).eval(), rho, knot);
    y += (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

namespace detail {
template <typename Scalar>
ContinuousAdjoint<Scalar> continuous_reverse(const ContinuousTrace<Scalar>& tr,
                                             const SlicedDistribution<Scalar>& rho,
                                             Scalar residual, Eigen::Index row,
                                             std::vector<ParticleParam<Scalar>>* grads) {
  const Eigen::Index dim = tr.states[0].rows();
  const Eigen::Index tokens = tr.states[0].cols();
  if (row < 0 || row >= dim) throw DimensionError("readout row out of range");
  const Scalar dt = tr.step_size();
  ContinuousAdjoint<Scalar> adj;
  adj.adjoints.assign(tr.states.size(), Mat<Scalar>());
  Mat<Scalar> a = Mat<Scalar>::Zero(dim, tokens);
  a(row, tokens - 1) = residual;
  adj.adjoints.back() = a;
  for (int n = tr.steps - 1; n >= 0; --n) {
    const int knot = n / tr.steps_per_knot;
    const Mat<Scalar>& y1 = tr.states[n];
    const Mat<Scalar>& y2 = tr.stages[3 * n];
    const Mat<Scalar>& y3 = tr.stages[3 * n + 1];
    const Mat<Scalar>& y4 = tr.stages[3 * n + 2];
    // Cotangents of the stage slopes k1..k4.
    const Mat<Scalar> c4 = (dt / 6) * a;
    const Mat<Scalar> a4 = knot_drift_vjp(y4, rho, knot, c4, grads);
    const Mat<Scalar> c3 = (dt / 3) * a + dt * a4;
    const Mat<Scalar> a3 = knot_drift_vjp(y3, rho, knot, c3, grads);
    const Mat<Scalar> c2 = (dt / 3) * a + (dt / 2) * a3;
    const Mat<Scalar> a2 = knot_drift_vjp(y2, rho, knot, c2, grads);
    const Mat<Scalar> c1 = (dt / 6) * a + (dt / 2) * a2;
    const Mat<Scalar> a1 = knot_drift_vjp(y1, rho, knot, c1, grads);
    a += a1 + a2 + a3 + a4;
    if (!a.allFinite())
      throw NumericalDivergence("non-finite continuous adjoint at step " + std::to_string(n));
    adj.adjoints[n] = a;
  }
  return adj;
}
}  // namespace detail

template <typename Scalar>
ContinuousAdjoint<Scalar> continuous_backward(Scalar y, const ContinuousTrace<Scalar>& tr,
                                              const SlicedDistribution<Scalar>& rho,
                                              Eigen::Index row) {
  const Scalar residual = readout(tr.output(), row) - y;
  return detail::continuous_reverse(tr, rho, residual, row,
                                    static_cast<std::vector<ParticleParam<Scalar>>*>(nullptr));
}

/// Forward and adjoint solutions for every sample, plus risk and objective.
template <typename Scalar>
struct MeanFieldEval {
  Scalar risk{0};
  Scalar objective{0};
  std::vector<ContinuousTrace<Scalar>> traces;
  std::vector<ContinuousAdjoint<Scalar>> adjoints;
  /// Knot-averaged particle drift G(beta_{s,k}) = S / w_k * dQ/dbeta_{s,k};
  /// populated only when requested.
  std::vector<ParticleParam<Scalar>> drift;
};

template <typename Scalar>
MeanFieldEval<Scalar> meanfield_evaluate(const DataSet& ds, const SlicedDistribution<Scalar>& rho,
                                         Scalar lambda, int steps_per_knot, bool with_drift,
                                         bool keep_traces = true) {
  if (ds.empty()) throw std::invalid_argument("meanfield evaluation on an empty dataset");
  rho.validate();
  MeanFieldEval<Scalar> ev;
  std::vector<ParticleParam<Scalar>> grads;
  if (with_drift) grads.assign(rho.size(), ParticleParam<Scalar>::zeros(rho.D, rho.hidden));
  const int steps = steps_per_knot * rho.S;
  for (const auto& s : ds.samples) {
    auto tr = continuous_forward<Scalar>(s.H.template cast<Scalar>(), rho, steps);
    const Scalar r = readout(tr.output(), ds.readout_row) - Scalar(s.y);
    ev.risk += r * r / Scalar(2);
    if (with_drift || keep_traces) {
      auto adj = detail::continuous_reverse(tr, rho, r, ds.readout_row,
                                            with_drift ? &grads : nullptr);
      if (keep_traces) {
        ev.traces.push_back(std::move(tr));
        ev.adjoints.push_back(std::move(adj));
      }
    }
  }
  const Scalar n(static_cast<double>(ds.size()));
  ev.risk /= n;
  ev.objective = ev.risk + lambda / Scalar(2) * rho.second_moment();
  if (with_drift) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      grads[i].scale(Scalar(rho.S) / n);
      grads[i].add_scaled(lambda, rho.particles[i]);
      if (!grads[i].all_finite())
        throw NumericalDivergence("non-finite mean-field drift at particle " + std::to_string(i));
    }
    ev.drift = std::move(grads);
  }
  return ev;
}

template <typename Scalar>
Scalar meanfield_objective(const DataSet& ds, const SlicedDistribution<Scalar>& rho, Scalar lambda,
                           int steps_per_knot) {
  return meanfield_evaluate(ds, rho, lambda, steps_per_knot, false, false).objective;
}

namespace detail {
template <typename Scalar>
std::size_t grid_index(const MeanFieldEval<Scalar>& ev, double t) {
  if (ev.traces.empty()) throw std::invalid_argument("mean-field cache holds no traces");
  const int steps = ev.traces.front().steps;
  const double x = t * steps;
  const double n = std::round(x);
  if (t < 0 || t > 1 || std::abs(x - n) > 1e-9)
    throw std::invalid_argument("depth t must lie on the integration grid");
  return static_cast<std::size_t>(n);
}
}  // namespace detail

/// dQ/drho(beta, t) = E[Tr(g(T(t), beta)^T p(t))] + lambda/2 ||beta||^2, with t
/// a grid point of the cached solution.
template <typename Scalar>
Scalar functional_gradient(const MeanFieldEval<Scalar>& ev, Scalar lambda,
                           const ParticleParam<Scalar>& beta, double t) {
  const std::size_t n = detail::grid_index(ev, t);
  Scalar total(0);
  for (std::size_t i = 0; i < ev.traces.size(); ++i)
    total += (avg_g(ev.traces[i].states[n], beta).cwiseProduct(ev.adjoints[i].adjoints[n])).sum();
  return total / Scalar(static_cast<double>(ev.traces.size())) +
         lambda / Scalar(2) * beta.squared_norm();
}

/// Pointwise particle drift G(beta, rho, t) = grad_beta dQ/drho(beta, t).
template <typename Scalar>
ParticleParam<Scalar> particle_drift(const MeanFieldEval<Scalar>& ev, Scalar lambda,
                                     const ParticleParam<Scalar>& beta, double t) {
  const std::size_t n = detail::grid_index(ev, t);
  ParticleParam<Scalar> g = ParticleParam<Scalar>::zeros(beta.D(), beta.hidden());
  for (std::size_t i = 0; i < ev.traces.size(); ++i)
    g.add_scaled(Scalar(1), avg_grad_param(ev.traces[i].states[n], beta, ev.adjoints[i].adjoints[n]));
  g.scale(Scalar(1) / Scalar(static_cast<double>(ev.traces.size())));
  return g.add_scaled(lambda, beta);
}

struct MeanFieldFlowConfig {
  double lambda = 0.0;
  double tau_end = 0.0;
  double dtau = 1e-3;
  int steps_per_knot = 16;
  double guard_tol = 1e-10;
  int max_splits = 12;
  int snapshot_every = 0;  // 0: no snapshots
};

struct MeanFieldFlowResult {
  SlicedDistribution<double> final_rho;
  FlowLog log;
  std::vector<std::pair<double, SlicedDistribution<double>>> snapshots;
};

inline FlowRecord meanfield_record(double tau, const SlicedDistribution<double>& rho,
                                   const MeanFieldEval<double>& ev) {
  FlowRecord rec;
  rec.tau = tau;
  rec.objective = ev.objective;
  rec.risk = ev.risk;
  rec.mean_sq_norm = rho.second_moment();
  double drift_sq = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    rec.max_norm = std::max(rec.max_norm, rho.particles[i].norm());
    drift_sq += rho.weights[i] * ev.drift[i].squared_norm();
  }
  rec.grad_norm = std::sqrt(drift_sq / rho.S);
  return rec;
}

/// Interacting-particle Wasserstein gradient flow: every particle moves with
/// d beta / d tau = -G(beta, rho, t), all drifts computed from the frozen
/// ensemble before any particle moves. Explicit Euler with energy guard.
inline MeanFieldFlowResult meanfield_flow(const DataSet& ds, const SlicedDistribution<double>& rho0,
                                          const MeanFieldFlowConfig& cfg,
                                          const std::function<void(const FlowRecord&)>& on_step = {}) {
  if (!(cfg.dtau > 0)) throw ConfigError("dtau must be positive");
  MeanFieldFlowResult out;
  SlicedDistribution<double> rho = rho0;
  auto eval = [&](const SlicedDistribution<double>& r) {
    return meanfield_evaluate<double>(ds, r, cfg.lambda, cfg.steps_per_knot, true, false);
  };
  auto move = [](const SlicedDistribution<double>& r, const MeanFieldEval<double>& ev, double h) {
    SlicedDistribution<double> next = r;
    for (std::size_t i = 0; i < next.size(); ++i) next.particles[i].add_scaled(-h, ev.drift[i]);
    return next;
  };
  MeanFieldEval<double> ev = eval(rho);
  const int nsteps = static_cast<int>(std::llround(cfg.tau_end / cfg.dtau));
  auto log_step = [&](int step) {
    out.log.records.push_back(meanfield_record(step * cfg.dtau, rho, ev));
    if (on_step) on_step(out.log.records.back());
    if (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0)
      out.snapshots.emplace_back(step * cfg.dtau, rho);
  };
  log_step(0);
  GuardStats stats;
  for (int step = 1; step <= nsteps; ++step) {
    guarded_euler_step(rho, ev, cfg.dtau, eval, move, cfg.guard_tol, cfg.max_splits, stats);
    log_step(step);
  }
  out.log.halvings = stats.halvings;
  out.log.guard_violations = stats.violations;
  out.log.accepted_steps = stats.accepted;
  out.final_rho = std::move(rho);
  return out;
}

}  // namespace tmf

#endif  // TMF_MEANFIELD_HPP
