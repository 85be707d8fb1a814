#include "tmf/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tmf/errors.hpp"

namespace tmf {

IclTask random_task(int d, int N, double coef_norm, double feature_bound, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  IclTask task;
  task.d = d;
  task.N = N;
  task.feature_bound = feature_bound;
  task.coef = VectorXd(d);
  for (int i = 0; i < d; ++i) task.coef(i) = normal(rng);
  task.coef *= coef_norm / task.coef.norm();
  return task;
}

LabelModel linear_labels(const IclTask& task) {
  const double a_norm = task.coef.norm();
  LabelModel labels;
  VectorXd coef = task.coef;
  labels.fn = [coef](const VectorXd& x) { return coef.dot(x); };
  labels.bound = a_norm * std::sqrt(static_cast<double>(task.d)) * task.feature_bound;
  labels.lipschitz = a_norm;
  return labels;
}

Sample make_sample(const MatrixXd& xs, const LabelModel& labels) {
  const Eigen::Index d = xs.rows();
  const Eigen::Index tokens = xs.cols();
  Sample s;
  s.H = MatrixXd::Zero(d + 2, tokens);
  s.H.topRows(d) = xs;
  for (Eigen::Index i = 0; i + 1 < tokens; ++i) s.H(d, i) = labels.fn(xs.col(i));
  s.H(d + 1, tokens - 1) = 1.0;
  s.y = labels.fn(xs.col(tokens - 1));
  return s;
}

DataSet generate(const IclTask& task, std::size_t count, std::uint64_t seed) {
  return generate(task, count, seed, linear_labels(task));
}

DataSet generate(const IclTask& task, std::size_t count, std::uint64_t seed,
                 const LabelModel& labels) {
  if (task.d < 1 || task.N < 0) throw ConfigError("task dims must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-task.feature_bound, task.feature_bound);
  DataSet ds;
  ds.d = task.d;
  ds.N = task.N;
  ds.D = task.d + 2;
  ds.readout_row = task.d;
  ds.seed = seed;
  const double b = task.feature_bound;
  const double feat = std::sqrt(static_cast<double>(task.d)) * b;
  // Context columns carry (x, y), the query column carries (x, 1).
  const double context_col = std::sqrt(feat * feat + labels.bound * labels.bound);
  const double query_col = std::sqrt(feat * feat + 1.0);
  ds.bound = std::max({context_col, query_col, labels.bound});
  ds.lipschitz = labels.lipschitz;
  ds.samples.reserve(count);
  MatrixXd xs(task.d, task.N + 1);
  for (std::size_t n = 0; n < count; ++n) {
    for (Eigen::Index c = 0; c < xs.cols(); ++c)
      for (Eigen::Index r = 0; r < xs.rows(); ++r) xs(r, c) = unif(rng);
    ds.samples.push_back(make_sample(xs, labels));
  }
  return ds;
}

DataSet zero_risk_dataset(int d, int N, std::size_t count) {
  DataSet ds;
  ds.d = d;
  ds.N = N;
  ds.D = d + 2;
  ds.readout_row = d;
  ds.samples.assign(count, Sample{MatrixXd::Zero(d + 2, N + 1), 0.0});
  return ds;
}

RegularityReport check_regularity(const DataSet& ds) {
  RegularityReport rep;
  rep.bound_witness = ds.bound;
  rep.lipschitz_witness = ds.lipschitz;
  for (const auto& s : ds.samples)
    rep.bound_hat = std::max({rep.bound_hat, col2_norm(s.H), std::abs(s.y)});
  for (std::size_t a = 0; a < ds.size(); ++a) {
    for (std::size_t b = a + 1; b < ds.size(); ++b) {
      const double dh = (ds.samples[a].H - ds.samples[b].H).norm();
      if (dh == 0.0) continue;
      rep.lipschitz_hat =
          std::max(rep.lipschitz_hat, std::abs(ds.samples[a].y - ds.samples[b].y) / dh);
    }
  }
  constexpr double slack = 1e-12;
  rep.pass = rep.bound_hat <= ds.bound * (1 + slack) + slack &&
             rep.lipschitz_hat <= ds.lipschitz * (1 + slack) + slack;
  return rep;
}

namespace {
nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw DimensionError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}
}  // namespace

nlohmann::json to_json(const DataSet& ds) {
  nlohmann::json j;
  j["d"] = ds.d;
  j["N"] = ds.N;
  j["D"] = ds.D;
  j["readout_row"] = ds.readout_row;
  j["bound"] = ds.bound;
  j["lipschitz"] = ds.lipschitz;
  j["seed"] = ds.seed;
  auto& samples = j["samples"] = nlohmann::json::array();
  for (const auto& s : ds.samples) samples.push_back({{"H", matrix_json(s.H)}, {"y", s.y}});
  return j;
}

DataSet dataset_from_json(const nlohmann::json& j) {
  DataSet ds;
  ds.d = j.at("d").get<int>();
  ds.N = j.at("N").get<int>();
  ds.D = j.at("D").get<int>();
  ds.readout_row = j.at("readout_row").get<int>();
  ds.bound = j.at("bound").get<double>();
  ds.lipschitz = j.at("lipschitz").get<double>();
  ds.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("samples")) {
    Sample sample{matrix_from_json(s.at("H")), s.at("y").get<double>()};
    require_shape(sample.H.rows() == ds.D && sample.H.cols() == ds.N + 1, "dataset sample");
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace tmf
