#ifndef TMF_DATA_HPP
#define TMF_DATA_HPP

// Synthetic in-context regression prompts. Each prompt is a D x (N+1) matrix
// with D = d + 2:
//
//   rows 0..d-1   features x_i
//   row  d        labels y_i (zero in the query column N)
//   row  d+1      query flag (1 in column N, 0 elsewhere)
//
// The prediction is read from entry (d, N).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmf/linalg.hpp"

namespace tmf {

struct IclTask {
  int d = 2;
  int N = 4;
  VectorXd coef;               // a, with ||a|| <= 1
  double feature_bound = 1.0;  // x uniform on [-b, b]^d
};

/// Draws a task with coefficient vector of the given norm, direction uniform.
IclTask random_task(int d, int N, double coef_norm, double feature_bound, std::uint64_t seed);

/// Label function y(x) with its sup bound and Lipschitz constant on the box.
struct LabelModel {
  std::function<double(const VectorXd&)> fn;
  double bound = 0.0;
  double lipschitz = 0.0;
};

LabelModel linear_labels(const IclTask& task);

struct Sample {
  MatrixXd H;
  double y = 0.0;
};

struct DataSet {
  std::vector<Sample> samples;
  int d = 0;
  int N = 0;
  int D = 0;
  int readout_row = 0;     // 0-based row of the prediction entry
  double bound = 0.0;      // B: max{||H||_2col, |y|} <= B
  double lipschitz = 0.0;  // K_y witness
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

DataSet generate(const IclTask& task, std::size_t count, std::uint64_t seed);
DataSet generate(const IclTask& task, std::size_t count, std::uint64_t seed,
                 const LabelModel& labels);

/// Builds one prompt from explicit features (columns of xs, N+1 of them).
Sample make_sample(const MatrixXd& xs, const LabelModel& labels);

/// All-zero prompts with zero labels: every parameter setting has zero risk.
DataSet zero_risk_dataset(int d, int N, std::size_t count);

struct RegularityReport {
  double bound_hat = 0.0;
  double lipschitz_hat = 0.0;
  double bound_witness = 0.0;
  double lipschitz_witness = 0.0;
  bool pass = false;
};

/// Scans for the empirical bound and the pairwise |dy| / ||dH||_F envelope.
RegularityReport check_regularity(const DataSet& ds);

nlohmann::json to_json(const DataSet& ds);
DataSet dataset_from_json(const nlohmann::json& j);

}  // namespace tmf

#endif  // TMF_DATA_HPP
