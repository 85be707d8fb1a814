#ifndef TMF_CONFIG_HPP
#define TMF_CONFIG_HPP

// Experiment configuration. Every group is optional in the input JSON; absent
// keys take the defaults below and unknown keys are rejected.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace tmf {

struct ModelDims {
  int d = 2;       // feature dimension, D = d + 2
  int N = 3;       // context length, N + 1 tokens
  int L = 3;
  int M = 2;
  int hidden = 0;  // 0: 2D
  int D() const { return d + 2; }
  int m() const { return hidden > 0 ? hidden : 2 * D(); }
};

struct DatasetSpec {
  std::string kind = "linear";  // linear | zero
  int samples = 64;
  double coef_norm = 1.0;
  double feature_bound = 1.0;
};

struct GradcheckSpec {
  int coordinates = 200;
  double fd_step = 1e-6;
  double tolerance = 1e-5;
  double rel_floor = 1e-6;  // denominators below this are clamped
  bool corrupt = false;     // fault injection: perturb one analytic coordinate
};

struct SweepSpec {
  std::string axis = "M";  // M: fixed L = S, vary M;  L: M = P, vary L = S
  std::vector<int> L{64};
  std::vector<int> M{16, 64, 256, 1024};
  int P = 256;             // particles per knot of rho (axis M)
  int seeds = 8;
  int batch = 4;           // prompts in the fixed data batch
  int steps_per_knot = 2;
  double radius = 1.0;
  double offset = 1.0;     // norm of the ball centre of rho (0: centred at the origin)
  bool zero_rho = false;
  std::array<double, 2> band_M{-0.7, -0.3};
  std::array<double, 2> band_L{-1.3, -0.7};
};

struct ClosenessSpec {
  std::vector<std::array<int, 2>> grid{{8, 16}, {16, 32}, {32, 64}};
  std::array<int, 2> reference{0, 0};  // 0: 4x the largest grid point
  int seeds = 3;
  int steps_per_knot = 1;
};

struct ConvergeSpec {
  int seeds = 5;
  int steps = 2000;
  double ratio = 0.2;
  double lambda_compare = 1e-2;  // <= 0: skip the lambda-sensitivity run
};

struct W2Spec {
  std::vector<double> gaps{1e-1, 1e-2, 1e-3};
  double factor = 10.0;
  std::string trajectory;       // load instead of running a flow
  bool save_trajectory = false;
};

struct ProbeGroup {
  std::string encoder = "both";  // attention | mlp | both
  int samples = 10000;
  double radius_T = 2.0;
  double radius_beta = 2.0;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  ModelDims model;
  DatasetSpec dataset;
  double lambda = 1e-3;
  double radius = 1.0;
  double dtau = 1e-3;
  double tau_end = 0.1;  // converge runs converge.steps * dtau instead
  double guard_tol = 1e-10;
  GradcheckSpec gradcheck;
  SweepSpec sweep;
  ClosenessSpec closeness;
  ConvergeSpec converge;
  W2Spec w2;
  ProbeGroup probe;
  std::string output = "out";

  void validate() const;
};

const std::vector<std::string>& experiment_ids();

/// Throws ConfigError on unknown keys, wrong types, or violated invariants.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Built-in defaults per experiment, overridden by the user's JSON.
ExperimentConfig default_config(const std::string& experiment);
ExperimentConfig resolve_config(const std::string& experiment, const nlohmann::json& user);

}  // namespace tmf

#endif  // TMF_CONFIG_HPP
