#include "tmf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include "tmf/errors.hpp"
#include "tmf/flow.hpp"
#include "tmf/meanfield.hpp"
#include "tmf/probe.hpp"
#include "tmf/transport.hpp"

namespace tmf {

using nlohmann::json;

namespace {

// Fixed child-stream indices so that every draw is tied to (seed, purpose).
enum Stream : std::uint64_t {
  kTaskStream = 1,
  kDataStream = 2,
  kInitStream = 3,
  kCoordStream = 4,
  kRhoStream = 10,
  kPickStream = 11,
  kCentreStream = 12,
};

std::uint64_t stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
  return child_seed(child_seed(seed, purpose), index);
}

}  // namespace

OutputDir::OutputDir(std::string dir, json resolved) : dir_(std::move(dir)), resolved_(std::move(resolved)) {
  std::filesystem::create_directories(dir_);
}

std::string OutputDir::file(const std::string& name) const {
  return (std::filesystem::path(dir_) / name).string();
}

std::ofstream OutputDir::csv(const std::string& name, const std::string& header) const {
  std::ofstream os(file(name));
  if (!os) throw std::runtime_error("cannot write " + file(name));
  os << header << '\n' << std::setprecision(17);
  json columns = json::array();
  std::size_t start = 0;
  while (true) {
    const auto comma = header.find(',', start);
    columns.push_back(header.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  write_json(name + ".json", {{"csv", name}, {"columns", columns}, {"config", resolved_}});
  return os;
}

void OutputDir::write_json(const std::string& name, const json& j) const {
  std::ofstream os(file(name));
  if (!os) throw std::runtime_error("cannot write " + file(name));
  os << j.dump(2) << '\n';
}

DataSet build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset.kind == "zero")
    return zero_risk_dataset(cfg.model.d, cfg.model.N, static_cast<std::size_t>(cfg.dataset.samples));
  const auto task = random_task(cfg.model.d, cfg.model.N, cfg.dataset.coef_norm,
                                cfg.dataset.feature_bound, stream(seed, kTaskStream));
  return generate(task, static_cast<std::size_t>(cfg.dataset.samples), stream(seed, kDataStream));
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// gradcheck

RunOutcome cmd_gradcheck(const ExperimentConfig& cfg, const OutputDir& out) {
  using LD = long double;
  const auto ds = build_dataset(cfg, cfg.seed);
  const int L = cfg.model.L, M = cfg.model.M, D = cfg.model.D(), m = cfg.model.m();
  const auto theta = init_ensemble(L, M, D, m, cfg.radius, stream(cfg.seed, kInitStream));
  auto ev = evaluate(ds, theta, cfg.lambda, true);
  const Eigen::Index per = ParticleParam<double>::flat_size(D, m);

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t p = 0; p < theta.size(); ++p)
    for (Eigen::Index c = 0; c < per; ++c) coords.emplace_back(p, c);
  Rng rng(stream(cfg.seed, kCoordStream));
  std::shuffle(coords.begin(), coords.end(), rng);

  std::vector<VectorXd> analytic;
  for (const auto& g : ev.gradient.particles) analytic.push_back(g.flatten());
  if (cfg.gradcheck.corrupt) {
    // Fault injection on the first coordinate visited.
    const auto [p, c] = coords.front();
    analytic[p](c) += 1e-3 * (1.0 + std::abs(analytic[p](c)));
  }

  const auto theta_l = theta.cast<LD>();
  const auto branches = activation_branches(ds, theta);
  const LD h = static_cast<LD>(cfg.gradcheck.fd_step);
  const LD ml = static_cast<LD>(L) * static_cast<LD>(M);
  auto csv = out.csv("gradcheck.csv", "particle,layer,head,coord,block,analytic,fd,rel_err");
  int checked = 0, skipped = 0;
  double worst = 0.0;
  json worst_at = nullptr;
  for (const auto& [p, c] : coords) {
    if (checked >= cfg.gradcheck.coordinates) break;
    auto shifted = [&](LD delta) {
      auto t = theta_l;
      Vec<LD> v = t.particles[p].flatten();
      v(c) += delta;
      t.particles[p] = ParticleParam<LD>::unflatten(v, D, m);
      return t;
    };
    const auto tp = shifted(h), tm = shifted(-h);
    if (activation_branches(ds, tp.cast<double>()) != branches ||
        activation_branches(ds, tm.cast<double>()) != branches) {
      ++skipped;
      continue;
    }
    const LD lam = static_cast<LD>(cfg.lambda);
    const double fd = static_cast<double>((objective(ds, tp, lam) - objective(ds, tm, lam)) / (2 * h) * ml);
    const double a = analytic[p](c);
    const double rel = std::abs(a - fd) / std::max(std::abs(fd), cfg.gradcheck.rel_floor);
    const int layer = static_cast<int>(p) / M, head = static_cast<int>(p) % M;
    const char* block = c < 2 * D * D ? "theta" : "w";
    csv << p << ',' << layer << ',' << head << ',' << c << ',' << block << ',' << a << ',' << fd
        << ',' << rel << '\n';
    if (worst_at.is_null() || rel > worst) {
      worst = rel;
      worst_at = {{"particle", p}, {"layer", layer}, {"head", head}, {"coord", c}, {"block", block},
                  {"analytic", a}, {"fd", fd}};
    }
    ++checked;
  }
  RunOutcome res;
  const bool enough = checked >= cfg.gradcheck.coordinates;
  const bool pass = enough && worst <= cfg.gradcheck.tolerance;
  res.summary = {{"checked", checked},         {"skipped_near_kinks", skipped},
                 {"max_rel_err", worst},       {"tolerance", cfg.gradcheck.tolerance},
                 {"worst_coordinate", worst_at}, {"enough_coordinates", enough},
                 {"pass", pass}};
  res.exit_code = pass ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------
// sweep-disc

namespace {

/// max over prompts and layer boundaries t = l / L of ||T_hat(t) - T_rho(t)||_F.
double sup_t_gap(const DataSet& ds, const ParamEnsemble<double>& theta,
                 const std::vector<ContinuousTrace<double>>& cont) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto tr = forward<double>(ds.samples[i].H, theta);
    const int per_layer = cont[i].steps / theta.L;
    for (int l = 0; l <= theta.L; ++l)
      worst = std::max(worst, (tr.states[2 * l] - cont[i].states[l * per_layer]).norm());
  }
  return worst;
}

std::vector<ContinuousTrace<double>> continuous_traces(const DataSet& ds,
                                                       const SlicedDistribution<double>& rho,
                                                       int steps_per_knot) {
  std::vector<ContinuousTrace<double>> out;
  for (const auto& s : ds.samples) out.push_back(continuous_forward<double>(s.H, rho, steps_per_knot * rho.S));
  return out;
}

}  // namespace

RunOutcome cmd_sweep_disc(const ExperimentConfig& cfg, const OutputDir& out) {
  const auto& sw = cfg.sweep;
  ExperimentConfig data_cfg = cfg;
  data_cfg.dataset.samples = sw.batch;
  const auto ds = build_dataset(data_cfg, cfg.seed);
  const int D = cfg.model.D(), m = cfg.model.m();
  const bool m_axis = sw.axis == "M";
  // Ball of radius R around a fixed centre. A centred ball is symmetric
  // under beta -> -beta, which makes the mean drift vanish in expectation.
  Rng crng(stream(cfg.seed, kCentreStream));
  VectorXd dir = uniform_ball(ParticleParam<double>::flat_size(D, m), 1.0, crng);
  const auto centre = ParticleParam<double>::unflatten(VectorXd(dir.normalized() * sw.offset), D, m);
  auto draw_rho = [&](int S, int P, std::uint64_t s) {
    auto rho = sample_rho0(S, P, D, m, sw.radius, s);
    for (auto& p : rho.particles) {
      p.add_scaled(1.0, centre);
      if (sw.zero_rho) p.scale(0.0);
    }
    return rho;
  };

  auto csv = out.csv("sweep_disc.csv", "axis,L,M,seed,error,metric");
  std::vector<double> xs, means;
  json points = json::array();
  if (m_axis) {
    const int L = sw.L.front();
    const auto rho = draw_rho(L, sw.P, stream(cfg.seed, kRhoStream));
    const auto cont = continuous_traces(ds, rho, sw.steps_per_knot);
    for (int M : sw.M) {
      double total = 0.0;
      for (int k = 0; k < sw.seeds; ++k) {
        // Theta i.i.d. from rho: every layer draws M heads from its knot.
        Rng rng(stream(cfg.seed, kPickStream, static_cast<std::uint64_t>(M) * 1000003u + k));
        std::uniform_int_distribution<int> pick(0, sw.P - 1);
        ParamEnsemble<double> theta{L, M, D, m, {}};
        for (int l = 0; l < L; ++l)
          for (int j = 0; j < M; ++j) theta.particles.push_back(rho.at(l, pick(rng)));
        const double err = sup_t_gap(ds, theta, cont);
        csv << "M," << L << ',' << M << ',' << k << ',' << err << ",sup_t_frobenius\n";
        total += err;
      }
      xs.push_back(M);
      means.push_back(total / sw.seeds);
      points.push_back({{"L", L}, {"M", M}, {"mean_error", means.back()}});
      std::clog << "[sweep-disc] L=" << L << " M=" << M << " mean error " << means.back() << '\n';
    }
  } else {
    const int M = sw.M.front();
    for (int L : sw.L) {
      double total = 0.0;
      for (int k = 0; k < sw.seeds; ++k) {
        // M = P: Theta is rho's own particle grid, redrawn for every L.
        const auto rho = draw_rho(L, M, stream(cfg.seed, kRhoStream, static_cast<std::uint64_t>(L) * 1000003u + k));
        const auto cont = continuous_traces(ds, rho, sw.steps_per_knot);
        const double err = sup_t_gap(ds, rho.as_ensemble(), cont);
        csv << "L," << L << ',' << M << ',' << k << ',' << err << ",sup_t_frobenius\n";
        total += err;
      }
      xs.push_back(L);
      means.push_back(total / sw.seeds);
      points.push_back({{"L", L}, {"M", M}, {"mean_error", means.back()}});
      std::clog << "[sweep-disc] L=" << L << " M=" << M << " mean error " << means.back() << '\n';
    }
  }
  auto mean_csv = out.csv("sweep_disc_mean.csv", "axis,L,M,mean_error");
  for (const auto& p : points)
    mean_csv << sw.axis << ',' << p["L"].get<int>() << ',' << p["M"].get<int>() << ','
             << p["mean_error"].get<double>() << '\n';

  RunOutcome res;
  const bool all_zero = std::all_of(means.begin(), means.end(), [](double v) { return v == 0.0; });
  const bool all_finite = std::all_of(means.begin(), means.end(), [](double v) { return std::isfinite(v); });
  const auto band = m_axis ? sw.band_M : sw.band_L;
  res.summary = {{"axis", sw.axis}, {"points", points}, {"band", band}};
  bool pass = false;
  if (sw.zero_rho) {
    res.summary["null_test"] = true;
    pass = all_zero;
  } else if (all_finite && xs.size() >= 2 && !std::any_of(means.begin(), means.end(), [](double v) { return v <= 0.0; })) {
    const double slope = fit_loglog_slope(xs, means);
    res.summary["slope"] = slope;
    pass = slope >= band[0] && slope <= band[1];
  }
  res.summary["pass"] = pass;
  res.exit_code = pass ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------
// flow-closeness

RunOutcome cmd_flow_closeness(const ExperimentConfig& cfg, const OutputDir& out) {
  const auto& cl = cfg.closeness;
  int Lmax = 0, Mmax = 0;
  for (const auto& g : cl.grid) {
    Lmax = std::max(Lmax, g[0]);
    Mmax = std::max(Mmax, g[1]);
  }
  const int Sref = cl.reference[0] > 0 ? cl.reference[0] : 4 * Lmax;
  const int Pref = cl.reference[1] > 0 ? cl.reference[1] : 4 * Mmax;
  for (const auto& g : cl.grid) {
    if (Sref % g[0] != 0) throw ConfigError("closeness grid L must divide the reference knot count");
    const int r = Sref / g[0];
    if ((g[1] + r - 1) / r > Pref) throw ConfigError("closeness grid M too large for the reference");
  }
  const int D = cfg.model.D(), m = cfg.model.m();
  const auto ds = build_dataset(cfg, cfg.seed);

  FlowConfig fc;
  fc.lambda = cfg.lambda;
  fc.dtau = cfg.dtau;
  fc.tau_end = cfg.tau_end;
  fc.guard_tol = cfg.guard_tol;
  fc.radius = cfg.radius;
  MeanFieldFlowConfig mc;
  mc.lambda = cfg.lambda;
  mc.dtau = cfg.dtau;
  mc.tau_end = cfg.tau_end;
  mc.guard_tol = cfg.guard_tol;
  mc.steps_per_knot = cl.steps_per_knot;

  auto csv = out.csv("flow_closeness.csv", "seed,L,M,tau,q_hat,q_ref,gap");
  std::vector<double> gap_sum(cl.grid.size(), 0.0);
  json per_seed = json::array();
  for (int k = 0; k < cl.seeds; ++k) {
    const auto rho0 = sample_rho0(Sref, Pref, D, m, cfg.radius, stream(cfg.seed, kRhoStream, k));
    const auto ref = meanfield_flow(ds, rho0, mc);
    std::clog << "[flow-closeness] seed " << k << " reference (" << Sref << ',' << Pref
              << ") Q " << ref.log.records.front().objective << " -> " << ref.log.records.back().objective << '\n';
    json row = json::array();
    for (std::size_t gi = 0; gi < cl.grid.size(); ++gi) {
      const int L = cl.grid[gi][0], M = cl.grid[gi][1];
      const int r = Sref / L;
      // Hierarchical coupling: layer l, head j starts from the reference
      // particle at knot l r + (j mod r), index j / r.
      ParamEnsemble<double> theta0{L, M, D, m, {}};
      for (int l = 0; l < L; ++l)
        for (int j = 0; j < M; ++j) theta0.particles.push_back(rho0.at(l * r + j % r, j / r));
      const auto run = run_flow(ds, theta0, fc);
      double gap = 0.0;
      for (std::size_t s = 0; s < run.log.records.size(); ++s) {
        const double q = run.log.records[s].objective, qr = ref.log.records[s].objective;
        gap = std::max(gap, std::abs(q - qr));
        csv << k << ',' << L << ',' << M << ',' << run.log.records[s].tau << ',' << q << ',' << qr
            << ',' << std::abs(q - qr) << '\n';
      }
      gap_sum[gi] += gap;
      row.push_back(gap);
      std::clog << "[flow-closeness] seed " << k << " (" << L << ',' << M << ") sup gap " << gap << '\n';
    }
    per_seed.push_back(row);
  }
  json points = json::array();
  bool decreasing = true;
  for (std::size_t gi = 0; gi < cl.grid.size(); ++gi) {
    const double mean = gap_sum[gi] / cl.seeds;
    points.push_back({{"L", cl.grid[gi][0]}, {"M", cl.grid[gi][1]}, {"mean_sup_gap", mean}});
    if (gi > 0 && !(mean < gap_sum[gi - 1] / cl.seeds)) decreasing = false;
  }
  RunOutcome res;
  res.summary = {{"reference", {Sref, Pref}}, {"points", points}, {"per_seed_sup_gap", per_seed},
                 {"strictly_decreasing", decreasing}, {"pass", decreasing}};
  res.exit_code = decreasing ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------
// converge

RunOutcome cmd_converge(const ExperimentConfig& cfg, const OutputDir& out) {
  const auto& cv = cfg.converge;
  const int L = cfg.model.L, M = cfg.model.M, D = cfg.model.D(), m = cfg.model.m();
  auto csv = out.csv("converge.csv", "seed,lambda,step,tau,objective,risk,mean_sq_norm,max_norm,grad_norm");
  std::vector<double> lambdas{cfg.lambda};
  if (cv.lambda_compare > 0) lambdas.push_back(cv.lambda_compare);

  json runs = json::array();
  std::vector<double> init_risk(lambdas.size(), 0.0), final_risk(lambdas.size(), 0.0),
      final_penalty(lambdas.size(), 0.0);
  for (int k = 0; k < cv.seeds; ++k) {
    const std::uint64_t s = child_seed(cfg.seed, static_cast<std::uint64_t>(k));
    const auto ds = build_dataset(cfg, s);
    const auto theta0 = init_ensemble(L, M, D, m, cfg.radius, stream(s, kInitStream));
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      FlowConfig fc;
      fc.lambda = lambdas[li];
      fc.dtau = cfg.dtau;
      fc.tau_end = cv.steps * cfg.dtau;
      fc.guard_tol = cfg.guard_tol;
      fc.radius = cfg.radius;
      const auto run = run_flow(ds, theta0, fc);
      const auto& recs = run.log.records;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        csv << k << ',' << lambdas[li] << ',' << i << ',' << r.tau << ',' << r.objective << ','
            << r.risk << ',' << r.mean_sq_norm << ',' << r.max_norm << ',' << r.grad_norm << '\n';
      }
      const double pen = lambdas[li] / 2 * recs.back().mean_sq_norm;
      init_risk[li] += recs.front().risk / cv.seeds;
      final_risk[li] += recs.back().risk / cv.seeds;
      final_penalty[li] += pen / cv.seeds;
      runs.push_back({{"seed", k}, {"lambda", lambdas[li]}, {"initial_risk", recs.front().risk},
                      {"final_risk", recs.back().risk}, {"final_penalty", pen},
                      {"final_mean_sq_norm", recs.back().mean_sq_norm},
                      {"halvings", run.log.halvings}, {"guard_violations", run.log.guard_violations}});
      std::clog << "[converge] seed " << k << " lambda " << lambdas[li] << " risk "
                << recs.front().risk << " -> " << recs.back().risk << '\n';
    }
  }
  const bool converged = final_risk[0] <= cv.ratio * init_risk[0];
  bool sensitive = true;
  RunOutcome res;
  res.summary = {{"runs", runs},
                 {"mean_initial_risk", init_risk[0]},
                 {"mean_final_risk", final_risk[0]},
                 {"ratio_target", cv.ratio},
                 {"risk_ratio", final_risk[0] / init_risk[0]},
                 {"converged", converged},
                 {"mean_final_penalty", final_penalty[0]}};
  if (lambdas.size() > 1) {
    sensitive = final_penalty[1] > final_penalty[0];
    res.summary["lambda_compare"] = lambdas[1];
    res.summary["mean_final_penalty_compare"] = final_penalty[1];
    res.summary["mean_final_risk_compare"] = final_risk[1];
    res.summary["penalty_increases_with_lambda"] = sensitive;
  }
  res.summary["pass"] = converged && sensitive;
  res.exit_code = converged && sensitive ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------
// w2-diag

std::vector<W2GapStat> w2_diagnostic(const Trajectory& traj, const std::vector<double>& gaps,
                                     std::ostream* rows) {
  if (traj.size() < 2) throw DimensionError("trajectory needs at least two snapshots");
  const auto& first = traj.front().second;
  for (const auto& [tau, e] : traj) {
    if (e.L != first.L || e.M != first.M || e.D != first.D || e.hidden != first.hidden ||
        e.size() != first.size())
      throw DimensionError("snapshot size mismatch at tau = " + std::to_string(tau));
  }
  const double spacing = traj[1].first - traj[0].first;
  if (!(spacing > 0)) throw DimensionError("snapshots must be increasing in tau");
  for (std::size_t i = 1; i < traj.size(); ++i)
    if (std::abs(traj[i].first - traj[i - 1].first - spacing) > 1e-9 * std::max(1.0, spacing))
      throw DimensionError("snapshots must be equally spaced in tau");

  const Eigen::Index dim = ParticleParam<double>::flat_size(first.D, first.hidden);
  // Layer clouds: one M-point cloud per layer and snapshot.
  std::vector<std::vector<PointCloud>> clouds(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& e = traj[i].second;
    for (int l = 0; l < e.L; ++l) {
      PointCloud c(dim, e.M);
      for (int j = 0; j < e.M; ++j) c.col(j) = e.at(l, j).flatten();
      clouds[i].push_back(std::move(c));
    }
  }
  std::vector<W2GapStat> out;
  for (double gap : gaps) {
    const long k = std::lround(gap / spacing);
    if (k < 1 || std::abs(k * spacing - gap) > 1e-6 * gap)
      throw DimensionError("gap is not a multiple of the snapshot spacing");
    W2GapStat st;
    st.gap = gap;
    for (std::size_t i = 0; i + k < traj.size(); ++i) {
      for (int l = 0; l < first.L; ++l) {
        const double w = w2_exact(clouds[i][l], clouds[i + k][l]);
        const double ratio = w / std::sqrt(gap);
        st.max_w2 = std::max(st.max_w2, w);
        st.max_ratio = std::max(st.max_ratio, ratio);
        ++st.pairs;
        if (rows) *rows << gap << ',' << traj[i].first << ',' << l << ',' << w << ',' << ratio << '\n';
      }
    }
    if (st.pairs == 0) throw DimensionError("trajectory shorter than the requested gap");
    out.push_back(st);
  }
  return out;
}

RunOutcome cmd_w2_diag(const ExperimentConfig& cfg, const OutputDir& out) {
  Trajectory traj;
  json source;
  if (!cfg.w2.trajectory.empty()) {
    traj = load_trajectory(cfg.w2.trajectory);
    source = {{"loaded", cfg.w2.trajectory}};
  } else {
    const auto ds = build_dataset(cfg, cfg.seed);
    const auto theta0 = init_ensemble(cfg.model.L, cfg.model.M, cfg.model.D(), cfg.model.m(),
                                      cfg.radius, stream(cfg.seed, kInitStream));
    FlowConfig fc;
    fc.lambda = cfg.lambda;
    fc.dtau = cfg.dtau;
    fc.tau_end = cfg.tau_end;
    fc.guard_tol = cfg.guard_tol;
    fc.radius = cfg.radius;
    fc.snapshot_every = 1;
    auto run = run_flow(ds, theta0, fc);
    traj = std::move(run.snapshots);
    source = {{"flow_steps", run.log.accepted_steps}, {"halvings", run.log.halvings}};
    auto fcsv = out.csv("w2_flow.csv", flow_csv_header());
    std::ostringstream body;
    write_flow_csv(body, run.log);
    const std::string text = body.str();
    fcsv << text.substr(text.find('\n') + 1);
    if (cfg.w2.save_trajectory) {
      save_trajectory(out.file("trajectory.bin"), traj);
      source["saved"] = out.file("trajectory.bin");
    }
  }
  auto csv = out.csv("w2_diag.csv", "gap,start_tau,layer,w2,ratio");
  const auto stats = w2_diagnostic(traj, cfg.w2.gaps, &csv);
  double lo = INFINITY, hi = 0.0;
  bool finite = true;
  json per_gap = json::array();
  for (const auto& s : stats) {
    finite = finite && std::isfinite(s.max_ratio);
    lo = std::min(lo, s.max_ratio);
    hi = std::max(hi, s.max_ratio);
    per_gap.push_back({{"gap", s.gap}, {"max_w2", s.max_w2}, {"max_ratio", s.max_ratio}, {"pairs", s.pairs}});
  }
  // A frozen trajectory has all ratios zero; that counts as stable.
  const double spread = hi == 0.0 ? 1.0 : hi / lo;
  const bool stable = finite && spread <= cfg.w2.factor;
  RunOutcome res;
  res.summary = {{"source", source}, {"per_gap", per_gap}, {"spread", spread},
                 {"factor", cfg.w2.factor}, {"finite", finite}, {"pass", stable}};
  res.exit_code = stable ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------
// probe

RunOutcome cmd_probe(const ExperimentConfig& cfg, const OutputDir& out) {
  std::vector<EncoderId> ids;
  if (cfg.probe.encoder == "both")
    ids = {EncoderId::attention, EncoderId::mlp};
  else
    ids = {encoder_from_string(cfg.probe.encoder)};
  auto csv = out.csv("probe.csv",
                     "encoder,sample_count,k_hat,param_grad_envelope,state_jac_envelope,growth_margin,"
                     "closed_form_margin,max_violation_margin");
  json reports = json::array();
  bool pass = true;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ProbeSpec spec;
    spec.encoder = ids[i];
    spec.D = cfg.model.D();
    spec.N = cfg.model.N;
    spec.hidden = cfg.model.m();
    spec.samples = static_cast<std::size_t>(cfg.probe.samples);
    spec.radius_T = cfg.probe.radius_T;
    spec.radius_beta = cfg.probe.radius_beta;
    spec.seed = child_seed(cfg.seed, i);
    const auto rep = probe_assumptions(spec);
    csv << rep.encoder << ',' << rep.sample_count << ',' << rep.k_hat << ',' << rep.param_grad_envelope
        << ',' << rep.state_jac_envelope << ',' << rep.growth_margin << ',' << rep.closed_form_margin
        << ',' << rep.max_violation_margin << '\n';
    out.write_json("probe_" + rep.encoder + ".json", to_json(rep));
    reports.push_back(to_json(rep));
    pass = pass && rep.max_violation_margin <= 0.0;
  }
  RunOutcome res;
  res.summary = {{"reports", reports}, {"pass", pass}};
  res.exit_code = pass ? kExitPass : kExitFail;
  return res;
}

// ---------------------------------------------------------------------------

RunOutcome run_experiment(const std::string& id, const ExperimentConfig& cfg, const std::string& dir) {
  RunOutcome res;
  std::unique_ptr<OutputDir> out;
  try {
    cfg.validate();
    const json resolved = to_json(cfg);
    out = std::make_unique<OutputDir>(dir, resolved);
    out->write_json("config.resolved.json", resolved);
    if (id == "gradcheck")
      res = cmd_gradcheck(cfg, *out);
    else if (id == "sweep-disc")
      res = cmd_sweep_disc(cfg, *out);
    else if (id == "flow-closeness")
      res = cmd_flow_closeness(cfg, *out);
    else if (id == "converge")
      res = cmd_converge(cfg, *out);
    else if (id == "w2-diag")
      res = cmd_w2_diag(cfg, *out);
    else if (id == "probe")
      res = cmd_probe(cfg, *out);
    else
      throw ConfigError("unknown experiment id '" + id + "'");
  } catch (const NumericalDivergence& e) {
    res.exit_code = kExitDivergence;
    res.summary = {{"pass", false}, {"error", "numerical divergence"}, {"diagnostics", e.what()}};
  } catch (const std::invalid_argument& e) {  // ConfigError, DimensionError
    res.exit_code = kExitConfig;
    res.summary = {{"pass", false}, {"error", "invalid configuration or input"}, {"diagnostics", e.what()}};
  }
  res.summary["experiment"] = id;
  res.summary["exit_code"] = res.exit_code;
  if (out) out->write_json("summary.json", res.summary);
  return res;
}

}  // namespace tmf
