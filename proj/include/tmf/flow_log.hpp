#ifndef TMF_FLOW_LOG_HPP
#define TMF_FLOW_LOG_HPP

#include <ostream>
#include <string>
#include <vector>

#include "tmf/errors.hpp"

namespace tmf {

struct FlowRecord {
  double tau = 0.0;
  double objective = 0.0;
  double risk = 0.0;
  double mean_sq_norm = 0.0;
  double max_norm = 0.0;
  double grad_norm = 0.0;  // sqrt of the mean squared particle drift
};

struct FlowLog {
  std::vector<FlowRecord> records;
  int halvings = 0;          // energy-guard step splits
  int guard_violations = 0;  // steps accepted at the split limit with Q still rising
  int accepted_steps = 0;
};

inline const char* flow_csv_header() {
  return "tau,objective,risk,mean_sq_norm,max_norm,grad_norm";
}

void write_flow_csv(std::ostream& os, const FlowLog& log);

struct GuardStats {
  int halvings = 0;
  int violations = 0;
  int accepted = 0;
};

/// One explicit Euler step of size dtau with the energy guard: if the
/// objective rises by more than tol (or the trial state diverges) the step is
/// replaced by two steps of half the size, recursively up to max_splits.
/// Eval(state) returns an object with an `objective` member; Move(state,
/// eval, dtau) returns the Euler update computed from the frozen state.
template <typename State, typename EvalResult, typename EvalFn, typename MoveFn>
void guarded_euler_step(State& state, EvalResult& ev, double dtau, const EvalFn& eval,
                        const MoveFn& move, double tol, int max_splits, GuardStats& stats) {
  State trial = move(state, ev, dtau);
  EvalResult trial_ev;
  bool diverged = false;
  try {
    trial_ev = eval(trial);
  } catch (const NumericalDivergence&) {
    diverged = true;
  }
  const bool rises = diverged || !(trial_ev.objective <= ev.objective + tol);
  if (rises && max_splits > 0) {
    ++stats.halvings;
    guarded_euler_step(state, ev, dtau / 2, eval, move, tol, max_splits - 1, stats);
    guarded_euler_step(state, ev, dtau / 2, eval, move, tol, max_splits - 1, stats);
    return;
  }
  if (diverged) throw NumericalDivergence("flow diverged at the step-split limit");
  if (rises) ++stats.violations;
  ++stats.accepted;
  state = std::move(trial);
  ev = std::move(trial_ev);
}

}  // namespace tmf

#endif  // TMF_FLOW_LOG_HPP
