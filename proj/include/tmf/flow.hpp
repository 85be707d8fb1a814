#ifndef TMF_FLOW_HPP
#define TMF_FLOW_HPP

// Gradient-flow training of the discrete ensemble,
//   d beta_{t,j} / d tau = -G(beta_{t,j}, Theta, t),
// by explicit Euler with simultaneous updates and an energy guard.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tmf/data.hpp"
#include "tmf/flow_log.hpp"
#include "tmf/model.hpp"

namespace tmf {

using Ensemble = ParamEnsemble<double>;

struct FlowConfig {
  double lambda = 0.0;
  double dtau = 1e-3;
  double tau_end = 1.0;
  std::uint64_t seed = 0;
  double radius = 1.0;
  double guard_tol = 1e-10;
  int max_splits = 12;
  int snapshot_every = 0;  // 0: no snapshots

  void validate() const;
};

/// L x M particles i.i.d. uniform on the ball of radius R.
Ensemble init_ensemble(int L, int M, Eigen::Index D, Eigen::Index hidden, double R,
                       std::uint64_t seed);

struct MomentStats {
  double mean_sq_norm = 0.0;
  double max_norm = 0.0;
};

MomentStats moment_stats(const Ensemble& theta);

struct FlowResult {
  Ensemble final_theta;
  FlowLog log;
  std::vector<std::pair<double, Ensemble>> snapshots;
};

FlowRecord flow_record(double tau, const Ensemble& theta, const Evaluation<double>& ev);

FlowResult run_flow(const DataSet& ds, const Ensemble& theta0, const FlowConfig& cfg,
                    const std::function<void(const FlowRecord&)>& on_step = {});

/// Moment ceiling R^2 + (2B^2 + 2B^2 exp(K(1+R+R^2))^2) / lambda.
double moment_ceiling(double R, double B, double K, double lambda);

/// Output ceiling ||H||_2col exp(K(1 + A + A^2)) with A^2 the mean squared norm.
double output_ceiling(double h_col2, double K, double mean_sq_norm);

}  // namespace tmf

#endif  // TMF_FLOW_HPP
