#include "tmf/probe.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "tmf/encoders.hpp"
#include "tmf/errors.hpp"
#include "tmf/sampling.hpp"

namespace tmf {

EncoderId encoder_from_string(const std::string& name) {
  if (name == "attention" || name == "f") return EncoderId::attention;
  if (name == "mlp" || name == "h") return EncoderId::mlp;
  throw ConfigError("unknown encoder id: " + name);
}

std::string to_string(EncoderId id) { return id == EncoderId::attention ? "attention" : "mlp"; }

namespace {

double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues()(0);
}

MatrixXd random_tokens(int D, int tokens, double radius, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixXd t(D, tokens);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = normal(rng);
  const double c = col2_norm(t);
  return c > 0 ? MatrixXd(t * (radius * unif(rng) / c)) : t;
}

double safe_ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

struct EncoderOps {
  EncoderId id;
  int D;
  int hidden;

  Eigen::Index param_size() const {
    return id == EncoderId::attention ? 2 * D * D : 2 * hidden * D;
  }
  MatrixXd apply(const MatrixXd& t, const VectorXd& a) const {
    const auto p = ParticleParam<double>::unflatten(full(a), D, hidden);
    return id == EncoderId::attention ? attn_f(t, p.attn) : mlp_h(t, p.mlp);
  }
  VectorXd grad(const MatrixXd& t, const VectorXd& a, const MatrixXd& u) const {
    const auto p = ParticleParam<double>::unflatten(full(a), D, hidden);
    return id == EncoderId::attention ? attn_grad_param(t, p.attn, u) : mlp_grad_param(t, p.mlp, u);
  }
  MatrixXd jac(const MatrixXd& t, const VectorXd& a) const {
    const auto p = ParticleParam<double>::unflatten(full(a), D, hidden);
    return id == EncoderId::attention ? attn_jacobian_T(t, p.attn) : mlp_jacobian_T(t, p.mlp);
  }
  // Embeds the encoder's own block into a full particle vector.
  VectorXd full(const VectorXd& a) const {
    VectorXd b = VectorXd::Zero(ParticleParam<double>::flat_size(D, hidden));
    if (id == EncoderId::attention)
      b.head(2 * D * D) = a;
    else
      b.tail(2 * hidden * D) = a;
    return b;
  }
};

}  // namespace

AssumptionProbeReport probe_assumptions(const ProbeSpec& spec) {
  if (spec.D < 1 || spec.N < 0 || spec.hidden < 1) throw ConfigError("probe dims must be positive");
  const EncoderOps ops{spec.encoder, spec.D, spec.hidden};
  const int tokens = spec.N + 1;
  Rng rng(spec.seed);
  AssumptionProbeReport rep;
  rep.encoder = to_string(spec.encoder);
  rep.sample_count = spec.samples;
  rep.growth_margin = -std::numeric_limits<double>::infinity();
  rep.closed_form_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < spec.samples; ++n) {
    const MatrixXd t = spec.zero_T ? MatrixXd::Zero(spec.D, tokens)
                                   : random_tokens(spec.D, tokens, spec.radius_T, rng);
    const VectorXd a = uniform_ball(ops.param_size(), spec.radius_beta, rng);
    const double an = a.norm();
    const double tc = col2_norm(t);
    const double tf = t.norm();
    const double poly = 1 + an + an * an;

    const double out = col2_norm(ops.apply(t, a));
    rep.k_hat = std::max(rep.k_hat, safe_ratio(out, tc * poly));
    rep.growth_margin = std::max(rep.growth_margin, out - tc * poly);
    const double closed = spec.encoder == EncoderId::attention ? an * tc : 2 * an * an * tc;
    rep.closed_form_margin = std::max(rep.closed_form_margin, out - closed);

    const double phi_p = tc + 2 * tc * tc;
    for (int i = 0; i < tokens; ++i) {
      MatrixXd g(spec.D, ops.param_size());
      for (int r = 0; r < spec.D; ++r) {
        MatrixXd u = MatrixXd::Zero(spec.D, tokens);
        u(r, i) = 1.0;
        g.row(r) = ops.grad(t, a, u).transpose();
      }
      rep.param_grad_envelope =
          std::max(rep.param_grad_envelope, safe_ratio(spectral_norm(g), phi_p * (1 + an)));
    }
    const double phi_t = tokens * (1 + 2 * tf * tf);
    rep.state_jac_envelope =
        std::max(rep.state_jac_envelope, safe_ratio(spectral_norm(ops.jac(t, a)), phi_t * poly));
  }
  if (spec.samples == 0) rep.growth_margin = rep.closed_form_margin = 0.0;
  rep.max_violation_margin = std::max(rep.growth_margin, rep.closed_form_margin);
  return rep;
}

nlohmann::json to_json(const AssumptionProbeReport& r) {
  return {{"encoder", r.encoder},
          {"sample_count", r.sample_count},
          {"k_hat", r.k_hat},
          {"param_grad_envelope", r.param_grad_envelope},
          {"state_jac_envelope", r.state_jac_envelope},
          {"growth_margin", r.growth_margin},
          {"closed_form_margin", r.closed_form_margin},
          {"max_violation_margin", r.max_violation_margin}};
}

}  // namespace tmf
