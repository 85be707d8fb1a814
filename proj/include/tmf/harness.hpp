#ifndef TMF_HARNESS_HPP
#define TMF_HARNESS_HPP

// Experiment programs behind the CLI. Each command writes its CSVs (header
// row plus a `<name>.csv.json` sidecar holding the resolved config) into the
// output directory and returns a summary with pass/fail.

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmf/config.hpp"
#include "tmf/data.hpp"
#include "tmf/serialize.hpp"

namespace tmf {

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitDivergence = 3 };

struct RunOutcome {
  int exit_code = kExitPass;
  nlohmann::json summary = nlohmann::json::object();
};

class OutputDir {
 public:
  OutputDir(std::string dir, nlohmann::json resolved);
  /// Opens `name` for writing, emits the header row and the sidecar.
  std::ofstream csv(const std::string& name, const std::string& header) const;
  void write_json(const std::string& name, const nlohmann::json& j) const;
  std::string file(const std::string& name) const;
  const nlohmann::json& resolved() const { return resolved_; }

 private:
  std::string dir_;
  nlohmann::json resolved_;
};

DataSet build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct W2GapStat {
  double gap = 0.0;
  double max_w2 = 0.0;
  double max_ratio = 0.0;  // max over start times and layers of W2 / sqrt(gap)
  int pairs = 0;
};

/// Per-layer W2 between snapshots a fixed time gap apart. Snapshots must be
/// equally spaced in tau and share the ensemble shape.
std::vector<W2GapStat> w2_diagnostic(const Trajectory& traj, const std::vector<double>& gaps,
                                     std::ostream* rows = nullptr);

RunOutcome cmd_gradcheck(const ExperimentConfig& cfg, const OutputDir& out);
RunOutcome cmd_sweep_disc(const ExperimentConfig& cfg, const OutputDir& out);
RunOutcome cmd_flow_closeness(const ExperimentConfig& cfg, const OutputDir& out);
RunOutcome cmd_converge(const ExperimentConfig& cfg, const OutputDir& out);
RunOutcome cmd_w2_diag(const ExperimentConfig& cfg, const OutputDir& out);
RunOutcome cmd_probe(const ExperimentConfig& cfg, const OutputDir& out);

/// Dispatches by id, writes config.resolved.json and summary.json, and maps
/// failures to exit codes (config 2, divergence 3).
RunOutcome run_experiment(const std::string& id, const ExperimentConfig& cfg,
                          const std::string& dir);

}  // namespace tmf

#endif  // TMF_HARNESS_HPP
