#ifndef TMF_PROBE_HPP
#define TMF_PROBE_HPP

// Empirical checks of the encoder growth conditions
//   (i)   ||enc(T, a)||_2col <= K ||T||_2col (1 + ||a|| + ||a||^2)
//   (ii)  ||grad_a enc(T, a)_{:,i}||_2 <= phi_P(||T||_2col) (1 + ||a||)
//   (iii) ||grad_vec(T) vec(enc(T, a))||_2 <= phi_T(N, D, ||T||_F) (1 + ||a|| + ||a||^2)
// on random (T, a) drawn inside given radii. (i) is checked with K = 1 together
// with the closed-form bounds ||f||_2col <= ||theta|| ||T||_2col and
// ||h||_2col <= 2 ||w||^2 ||T||_2col; the envelopes of (ii) and (iii) are reported
// as max-ratio constants against phi_P(x) = x + 2x^2 and
// phi_T = (N+1)(1 + 2||T||_F^2).

#include <cstdint>
#include <string>

#include <json.hpp>

namespace tmf {

enum class EncoderId { attention, mlp };

EncoderId encoder_from_string(const std::string& name);
std::string to_string(EncoderId id);

struct ProbeSpec {
  EncoderId encoder = EncoderId::attention;
  int D = 4;
  int N = 4;
  int hidden = 8;
  std::size_t samples = 10000;
  double radius_T = 2.0;     // bound on ||T||_2col
  double radius_beta = 2.0;  // bound on ||theta|| (or ||w||)
  bool zero_T = false;       // draw T = 0 only
  std::uint64_t seed = 0;
};

struct AssumptionProbeReport {
  std::string encoder;
  std::size_t sample_count = 0;
  double k_hat = 0.0;                 // max ratio for (i)
  double param_grad_envelope = 0.0;   // max ratio for (ii)
  double state_jac_envelope = 0.0;    // max ratio for (iii)
  double growth_margin = 0.0;         // max of lhs - rhs in (i) with K = 1
  double closed_form_margin = 0.0;    // max of lhs - rhs for the closed-form bound
  double max_violation_margin = 0.0;  // max of the two margins; <= 0 means all hold
};

AssumptionProbeReport probe_assumptions(const ProbeSpec& spec);

nlohmann::json to_json(const AssumptionProbeReport& r);

}  // namespace tmf

#endif  // TMF_PROBE_HPP
