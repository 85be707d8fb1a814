#include "tmf/serialize.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "tmf/errors.hpp"

namespace tmf {

static_assert(std::endian::native == std::endian::little, "binary layout assumes little endian");

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated header");
  return v;
}

nlohmann::json shape_json(const ParamEnsemble<double>& e) {
  return {{"L", e.L}, {"M", e.M}, {"D", e.D}, {"m", e.hidden},
          {"flat_size", ParticleParam<double>::flat_size(e.D, e.hidden)}};
}

void write_sidecar(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path + ".json");
  if (!os) throw std::runtime_error("cannot write " + path + ".json");
  os << j.dump(2) << '\n';
}

}  // namespace

void write_ensemble_binary(std::ostream& os, const ParamEnsemble<double>& e) {
  e.validate();
  put_u64(os, static_cast<std::uint64_t>(e.L));
  put_u64(os, static_cast<std::uint64_t>(e.M));
  put_u64(os, static_cast<std::uint64_t>(e.D));
  put_u64(os, static_cast<std::uint64_t>(e.hidden));
  for (const auto& p : e.particles) {
    const VectorXd v = p.flatten();
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("ensemble write failed");
}

ParamEnsemble<double> read_ensemble_binary(std::istream& is) {
  const auto L = get_u64(is), M = get_u64(is), D = get_u64(is), m = get_u64(is);
  if (L == 0 || M == 0 || D == 0 || m == 0 || L > (1u << 24) || M > (1u << 24) || D > 4096 ||
      m > 65536)
    throw DimensionError("implausible ensemble header");
  ParamEnsemble<double> e{static_cast<int>(L), static_cast<int>(M), static_cast<Eigen::Index>(D),
                          static_cast<Eigen::Index>(m), {}};
  const Eigen::Index n = ParticleParam<double>::flat_size(e.D, e.hidden);
  VectorXd v(n);
  e.particles.reserve(L * M);
  for (std::uint64_t i = 0; i < L * M; ++i) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
      throw std::runtime_error("truncated particle data");
    e.particles.push_back(ParticleParam<double>::unflatten(v, e.D, e.hidden));
  }
  return e;
}

void save_ensemble(const std::string& path, const ParamEnsemble<double>& e,
                   const nlohmann::json& provenance) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_ensemble_binary(os, e);
  nlohmann::json side = shape_json(e);
  side["layout"] = "u64 L,M,D,m; f64 particles (t,j) row-major, theta then w";
  side["provenance"] = provenance;
  write_sidecar(path, side);
}

ParamEnsemble<double> load_ensemble(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_ensemble_binary(is);
}

void save_sliced(const std::string& path, const SlicedDistribution<double>& rho, double radius,
                 std::uint64_t seed) {
  rho.validate();
  if (!rho.uniform_weights()) throw DimensionError("only uniform-weight distributions serialize");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_ensemble_binary(os, rho.as_ensemble());
  nlohmann::json knots = nlohmann::json::array();
  for (int s = 0; s < rho.S; ++s) knots.push_back(static_cast<double>(s) / rho.S);
  write_sidecar(path, {{"S", rho.S}, {"P", rho.P}, {"D", rho.D}, {"m", rho.hidden},
                       {"R", radius}, {"seed", seed}, {"knots", knots},
                       {"layout", "u64 S,P,D,m; f64 particles (s,k) row-major, theta then w"}});
}

SlicedDistribution<double> load_sliced(const std::string& path) {
  return SlicedDistribution<double>::from_ensemble(load_ensemble(path));
}

void save_trajectory(const std::string& path, const Trajectory& snaps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  put_u64(os, snaps.size());
  for (const auto& [tau, e] : snaps) {
    os.write(reinterpret_cast<const char*>(&tau), sizeof tau);
    write_ensemble_binary(os, e);
  }
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  const auto n = get_u64(is);
  Trajectory out;
  for (std::uint64_t i = 0; i < n; ++i) {
    double tau = 0.0;
    if (!is.read(reinterpret_cast<char*>(&tau), sizeof tau)) throw std::runtime_error("truncated trajectory");
    out.emplace_back(tau, read_ensemble_binary(is));
  }
  return out;
}

}  // namespace tmf
