#ifndef TMF_SERIALIZE_HPP
#define TMF_SERIALIZE_HPP

// Flat binary layout for particle grids:
//   u64 rows, u64 cols, u64 D, u64 m      (little endian)
//   rows * cols particles in row-major (row, col) order, each theta ++ w as f64
// with a JSON sidecar next to the file (path + ".json").

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tmf/meanfield.hpp"
#include "tmf/model.hpp"

namespace tmf {

void write_ensemble_binary(std::ostream& os, const ParamEnsemble<double>& e);
ParamEnsemble<double> read_ensemble_binary(std::istream& is);

/// Writes `path` and `path.json`; the sidecar holds the shapes plus `provenance`.
void save_ensemble(const std::string& path, const ParamEnsemble<double>& e,
                   const nlohmann::json& provenance = nlohmann::json::object());
ParamEnsemble<double> load_ensemble(const std::string& path);

/// Requires uniform per-knot weights. Sidecar records R, seed and knot starts.
void save_sliced(const std::string& path, const SlicedDistribution<double>& rho, double radius,
                 std::uint64_t seed);
SlicedDistribution<double> load_sliced(const std::string& path);

/// Snapshot sequence: u64 count, then per snapshot f64 tau followed by the
/// ensemble layout above.
using Trajectory = std::vector<std::pair<double, ParamEnsemble<double>>>;
void save_trajectory(const std::string& path, const Trajectory& snaps);
Trajectory load_trajectory(const std::string& path);

}  // namespace tmf

#endif  // TMF_SERIALIZE_HPP
