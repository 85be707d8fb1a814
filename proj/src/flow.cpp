#include "tmf/flow.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "tmf/sampling.hpp"

namespace tmf {

void FlowConfig::validate() const {
  if (!(dtau > 0)) throw ConfigError("dtau must be positive");
  if (!(tau_end >= 0)) throw ConfigError("tau_end must be nonnegative");
  if (tau_end > 0 && dtau > tau_end) throw ConfigError("dtau must not exceed tau_end");
  if (!(radius > 0)) throw ConfigError("init radius must be positive");
  if (!(lambda >= 0)) throw ConfigError("lambda must be nonnegative");
}

Ensemble init_ensemble(int L, int M, Eigen::Index D, Eigen::Index hidden, double R,
                       std::uint64_t seed) {
  if (!(R > 0)) throw ConfigError("init radius must be positive");
  Rng rng(seed);
  Ensemble e{L, M, D, hidden, {}};
  e.particles.reserve(static_cast<std::size_t>(L) * M);
  for (int i = 0; i < L * M; ++i) e.particles.push_back(sample_particle(D, hidden, R, rng));
  return e;
}

MomentStats moment_stats(const Ensemble& theta) {
  MomentStats st;
  for (const auto& p : theta.particles) {
    st.mean_sq_norm += p.squared_norm();
    st.max_norm = std::max(st.max_norm, p.norm());
  }
  if (!theta.particles.empty()) st.mean_sq_norm /= static_cast<double>(theta.particles.size());
  return st;
}

FlowRecord flow_record(double tau, const Ensemble& theta, const Evaluation<double>& ev) {
  const MomentStats st = moment_stats(theta);
  FlowRecord rec;
  rec.tau = tau;
  rec.objective = ev.objective;
  rec.risk = ev.risk;
  rec.mean_sq_norm = st.mean_sq_norm;
  rec.max_norm = st.max_norm;
  double g2 = 0.0;
  for (const auto& g : ev.gradient.particles) g2 += g.squared_norm();
  rec.grad_norm = std::sqrt(g2 / static_cast<double>(ev.gradient.particles.size()));
  return rec;
}

FlowResult run_flow(const DataSet& ds, const Ensemble& theta0, const FlowConfig& cfg,
                    const std::function<void(const FlowRecord&)>& on_step) {
  cfg.validate();
  theta0.validate();
  FlowResult out;
  Ensemble theta = theta0;
  auto eval = [&](const Ensemble& t) { return evaluate<double>(ds, t, cfg.lambda, true); };
  auto move = [](const Ensemble& t, const Evaluation<double>& ev, double h) {
    Ensemble next = t;
    for (std::size_t i = 0; i < next.size(); ++i) next.particles[i].add_scaled(-h, ev.gradient.particles[i]);
    return next;
  };
  Evaluation<double> ev = eval(theta);
  const int nsteps = static_cast<int>(std::llround(cfg.tau_end / cfg.dtau));
  auto log_step = [&](int step) {
    out.log.records.push_back(flow_record(step * cfg.dtau, theta, ev));
    if (on_step) on_step(out.log.records.back());
    if (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0)
      out.snapshots.emplace_back(step * cfg.dtau, theta);
  };
  log_step(0);
  GuardStats stats;
  for (int step = 1; step <= nsteps; ++step) {
    try {
      guarded_euler_step(theta, ev, cfg.dtau, eval, move, cfg.guard_tol, cfg.max_splits, stats);
    } catch (const NumericalDivergence& e) {
      throw NumericalDivergence(std::string(e.what()) + " (tau = " +
                                std::to_string(step * cfg.dtau) + ")");
    }
    log_step(step);
  }
  out.log.halvings = stats.halvings;
  out.log.guard_violations = stats.violations;
  out.log.accepted_steps = stats.accepted;
  out.final_theta = std::move(theta);
  return out;
}

void write_flow_csv(std::ostream& os, const FlowLog& log) {
  os << flow_csv_header() << '\n' << std::setprecision(17);
  for (const auto& r : log.records)
    os << r.tau << ',' << r.objective << ',' << r.risk << ',' << r.mean_sq_norm << ','
       << r.max_norm << ',' << r.grad_norm << '\n';
}

double moment_ceiling(double R, double B, double K, double lambda) {
  if (!(lambda > 0)) return std::numeric_limits<double>::infinity();
  const double e = std::exp(K * (1 + R + R * R));
  return R * R + (2 * B * B + 2 * B * B * e * e) / lambda;
}

double output_ceiling(double h_col2, double K, double mean_sq_norm) {
  const double a = std::sqrt(mean_sq_norm);
  return h_col2 * std::exp(K * (1 + a + mean_sq_norm));
}

}  // namespace tmf
