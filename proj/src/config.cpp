#include "tmf/config.hpp"

#include <algorithm>
#include <fstream>

#include "tmf/errors.hpp"

namespace tmf {

using nlohmann::json;

const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"gradcheck", "sweep-disc", "flow-closeness",
                                            "converge",  "w2-diag",    "probe"};
  return ids;
}

namespace {

json pair_json(const std::array<int, 2>& p) { return json::array({p[0], p[1]}); }

// Overlays `user` onto `base`; every user key must already exist in base
// with a compatible type. Arrays are replaced wholesale.
void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + path);
    json& slot = base[it.key()];
    const json& v = it.value();
    if (slot.is_object()) {
      overlay(slot, v, path);
      continue;
    }
    const bool ok = (slot.is_boolean() && v.is_boolean()) || (slot.is_string() && v.is_string()) ||
                    (slot.is_array() && v.is_array()) ||
                    (slot.is_number_integer() && v.is_number_integer()) ||
                    (slot.is_number_float() && v.is_number());
    if (!ok) throw ConfigError("wrong type for config key: " + path);
    if (slot.is_number_unsigned() && v.is_number_integer() && v.get<long long>() < 0)
      throw ConfigError("config key must be nonnegative: " + path);
    slot = v;
  }
}

template <typename T>
T read(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value for ") + key + ": " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json grid = json::array();
  for (const auto& g : c.closeness.grid) grid.push_back(pair_json(g));
  return {
      {"experiment", c.experiment},
      {"seed", c.seed},
      {"model", {{"d", c.model.d}, {"N", c.model.N}, {"L", c.model.L}, {"M", c.model.M},
                 {"hidden", c.model.hidden}}},
      {"dataset", {{"kind", c.dataset.kind}, {"samples", c.dataset.samples},
                   {"coef_norm", c.dataset.coef_norm}, {"feature_bound", c.dataset.feature_bound}}},
      {"lambda", c.lambda},
      {"radius", c.radius},
      {"dtau", c.dtau},
      {"tau_end", c.tau_end},
      {"guard_tol", c.guard_tol},
      {"gradcheck", {{"coordinates", c.gradcheck.coordinates}, {"fd_step", c.gradcheck.fd_step},
                     {"tolerance", c.gradcheck.tolerance}, {"rel_floor", c.gradcheck.rel_floor},
                     {"corrupt", c.gradcheck.corrupt}}},
      {"sweep", {{"axis", c.sweep.axis}, {"L", c.sweep.L}, {"M", c.sweep.M}, {"P", c.sweep.P},
                 {"seeds", c.sweep.seeds}, {"batch", c.sweep.batch},
                 {"steps_per_knot", c.sweep.steps_per_knot}, {"radius", c.sweep.radius},
                 {"offset", c.sweep.offset}, {"zero_rho", c.sweep.zero_rho},
                 {"band_M", json::array({c.sweep.band_M[0], c.sweep.band_M[1]})},
                 {"band_L", json::array({c.sweep.band_L[0], c.sweep.band_L[1]})}}},
      {"closeness", {{"grid", grid}, {"reference", pair_json(c.closeness.reference)},
                     {"seeds", c.closeness.seeds}, {"steps_per_knot", c.closeness.steps_per_knot}}},
      {"converge", {{"seeds", c.converge.seeds}, {"steps", c.converge.steps},
                    {"ratio", c.converge.ratio}, {"lambda_compare", c.converge.lambda_compare}}},
      {"w2", {{"gaps", c.w2.gaps}, {"factor", c.w2.factor}, {"trajectory", c.w2.trajectory},
              {"save_trajectory", c.w2.save_trajectory}}},
      {"probe", {{"encoder", c.probe.encoder}, {"samples", c.probe.samples},
                 {"radius_T", c.probe.radius_T}, {"radius_beta", c.probe.radius_beta}}},
      {"output", c.output},
  };
}

ExperimentConfig config_from_json(const json& user) {
  json merged = to_json(ExperimentConfig{});
  overlay(merged, user, "");
  ExperimentConfig c;
  c.experiment = read<std::string>(merged, "experiment");
  c.seed = read<std::uint64_t>(merged, "seed");
  const json& m = merged["model"];
  c.model = {read<int>(m, "d"), read<int>(m, "N"), read<int>(m, "L"), read<int>(m, "M"),
             read<int>(m, "hidden")};
  const json& ds = merged["dataset"];
  c.dataset = {read<std::string>(ds, "kind"), read<int>(ds, "samples"),
               read<double>(ds, "coef_norm"), read<double>(ds, "feature_bound")};
  c.lambda = read<double>(merged, "lambda");
  c.radius = read<double>(merged, "radius");
  c.dtau = read<double>(merged, "dtau");
  c.tau_end = read<double>(merged, "tau_end");
  c.guard_tol = read<double>(merged, "guard_tol");
  const json& g = merged["gradcheck"];
  c.gradcheck = {read<int>(g, "coordinates"), read<double>(g, "fd_step"),
                 read<double>(g, "tolerance"), read<double>(g, "rel_floor"),
                 read<bool>(g, "corrupt")};
  const json& s = merged["sweep"];
  c.sweep.axis = read<std::string>(s, "axis");
  c.sweep.L = read<std::vector<int>>(s, "L");
  c.sweep.M = read<std::vector<int>>(s, "M");
  c.sweep.P = read<int>(s, "P");
  c.sweep.seeds = read<int>(s, "seeds");
  c.sweep.batch = read<int>(s, "batch");
  c.sweep.steps_per_knot = read<int>(s, "steps_per_knot");
  c.sweep.radius = read<double>(s, "radius");
  c.sweep.offset = read<double>(s, "offset");
  c.sweep.zero_rho = read<bool>(s, "zero_rho");
  c.sweep.band_M = read<std::array<double, 2>>(s, "band_M");
  c.sweep.band_L = read<std::array<double, 2>>(s, "band_L");
  const json& cl = merged["closeness"];
  c.closeness.grid = read<std::vector<std::array<int, 2>>>(cl, "grid");
  c.closeness.reference = read<std::array<int, 2>>(cl, "reference");
  c.closeness.seeds = read<int>(cl, "seeds");
  c.closeness.steps_per_knot = read<int>(cl, "steps_per_knot");
  const json& cv = merged["converge"];
  c.converge = {read<int>(cv, "seeds"), read<int>(cv, "steps"), read<double>(cv, "ratio"),
                read<double>(cv, "lambda_compare")};
  const json& w = merged["w2"];
  c.w2 = {read<std::vector<double>>(w, "gaps"), read<double>(w, "factor"),
          read<std::string>(w, "trajectory"), read<bool>(w, "save_trajectory")};
  const json& p = merged["probe"];
  c.probe = {read<std::string>(p, "encoder"), read<int>(p, "samples"), read<double>(p, "radius_T"),
             read<double>(p, "radius_beta")};
  c.output = read<std::string>(merged, "output");
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  const auto& ids = experiment_ids();
  require(experiment.empty() || std::find(ids.begin(), ids.end(), experiment) != ids.end(),
          "unknown experiment id '" + experiment + "'");
  require(model.d >= 1 && model.N >= 1 && model.L >= 1 && model.M >= 1 && model.hidden >= 0,
          "model dims must be positive");
  require(dataset.kind == "linear" || dataset.kind == "zero", "dataset.kind must be linear or zero");
  require(dataset.samples >= 1, "dataset.samples must be positive");
  require(dataset.coef_norm >= 0 && dataset.coef_norm <= 1, "dataset.coef_norm must lie in [0, 1]");
  require(dataset.feature_bound > 0, "dataset.feature_bound must be positive");
  require(lambda >= 0, "lambda must be nonnegative");
  require(radius > 0, "radius must be positive");
  require(dtau > 0, "dtau must be positive");
  require(tau_end >= 0, "tau_end must be nonnegative");
  require(tau_end == 0 || experiment == "converge" || dtau <= tau_end, "dtau must not exceed tau_end");
  require(guard_tol >= 0, "guard_tol must be nonnegative");
  require(gradcheck.coordinates >= 1 && gradcheck.fd_step > 0 && gradcheck.tolerance > 0 &&
              gradcheck.rel_floor > 0,
          "gradcheck settings must be positive");
  require(sweep.axis == "M" || sweep.axis == "L", "sweep.axis must be M or L");
  require(!sweep.L.empty() && !sweep.M.empty(), "sweep grids must be nonempty");
  for (int v : sweep.L) require(v >= 1, "sweep.L entries must be positive");
  for (int v : sweep.M) require(v >= 1, "sweep.M entries must be positive");
  require(sweep.axis == "L" || sweep.L.size() == 1, "sweep.axis M takes a single L");
  require(sweep.axis == "M" || sweep.M.size() == 1, "sweep.axis L takes a single M");
  require(sweep.P >= 1 && sweep.seeds >= 1 && sweep.batch >= 1 && sweep.steps_per_knot >= 1 &&
              sweep.radius > 0 && sweep.offset >= 0,
          "sweep settings must be positive");
  require(sweep.band_M[0] < sweep.band_M[1] && sweep.band_L[0] < sweep.band_L[1],
          "sweep slope bands must be increasing");
  require(!closeness.grid.empty(), "closeness.grid must be nonempty");
  for (const auto& g : closeness.grid) require(g[0] >= 1 && g[1] >= 1, "closeness grid entries");
  require(closeness.reference[0] >= 0 && closeness.reference[1] >= 0, "closeness.reference");
  require(closeness.seeds >= 1 && closeness.steps_per_knot >= 1, "closeness settings");
  require(converge.seeds >= 1 && converge.steps >= 1 && converge.ratio > 0, "converge settings");
  require(!w2.gaps.empty() && w2.factor > 0, "w2 settings");
  for (double g : w2.gaps) require(g > 0, "w2.gaps entries must be positive");
  require(probe.encoder == "attention" || probe.encoder == "mlp" || probe.encoder == "both",
          "probe.encoder must be attention, mlp or both");
  require(probe.samples >= 1 && probe.radius_T > 0 && probe.radius_beta > 0, "probe settings");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "gradcheck") {
    c.model = {2, 3, 3, 2, 8};
    c.radius = 1.5;
    c.lambda = 1e-2;
  } else if (experiment == "sweep-disc") {
    c.model = {2, 3, 64, 16, 8};
  } else if (experiment == "flow-closeness") {
    c.model = {1, 2, 8, 16, 6};
    c.dataset.samples = 8;
    c.radius = 1.0;
    c.lambda = 1e-3;
    c.dtau = 1e-2;
    c.tau_end = 1.0;
  } else if (experiment == "converge") {
    c.model = {2, 8, 8, 16, 8};
    c.dataset.samples = 32;
    c.lambda = 1e-4;
    c.dtau = 1e-1;
  } else if (experiment == "w2-diag") {
    c.model = {2, 3, 4, 16, 8};
    c.dataset.samples = 16;
    c.lambda = 1e-2;
    c.tau_end = 1.0;
  } else if (experiment == "probe") {
    c.model = {2, 3, 1, 1, 8};
  } else {
    throw ConfigError("unknown experiment id '" + experiment + "'");
  }
  return c;
}

ExperimentConfig resolve_config(const std::string& experiment, const json& user) {
  json base = to_json(default_config(experiment));
  overlay(base, user, "");
  if (base["experiment"] != experiment)
    throw ConfigError("config experiment '" + base["experiment"].get<std::string>() +
                      "' does not match subcommand '" + experiment + "'");
  return config_from_json(base);
}

}  // namespace tmf
