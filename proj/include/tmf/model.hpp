#ifndef TMF_MODEL_HPP
#define TMF_MODEL_HPP

// Discrete depth-L, width-M transformer. Each block applies a residual
// attention half-step followed by a residual MLP half-step, both with step
// dt/2 = 1/(2L) and head averaging:
//
//   T(t + dt/2) = T(t)          + (dt/2) M^-1 sum_j f(T(t), theta_{t,j})
//   T(t + dt)   = T(t + dt/2)   + (dt/2) M^-1 sum_j h(T(t + dt/2), w_{t,j})
//
// States and adjoints are indexed by half-steps k = 0..2L (t = k dt / 2).

#include <cstdint>
#include <string>
#include <vector>

#include "tmf/data.hpp"
#include "tmf/encoders.hpp"

namespace tmf {

template <typename Scalar>
struct ParamEnsemble {
  int L = 0;
  int M = 0;
  Eigen::Index D = 0;
  Eigen::Index hidden = 0;
  std::vector<ParticleParam<Scalar>> particles;  // layer-major: (t, j) -> t * M + j

  static ParamEnsemble zeros(int depth, int width, Eigen::Index dim, Eigen::Index hid) {
    ParamEnsemble e{depth, width, dim, hid, {}};
    e.particles.assign(static_cast<std::size_t>(depth) * width,
                       ParticleParam<Scalar>::zeros(dim, hid));
    return e;
  }

  Scalar dt() const { return Scalar(1) / Scalar(L); }
  std::size_t size() const { return particles.size(); }
  ParticleParam<Scalar>& at(int layer, int head) { return particles[index(layer, head)]; }
  const ParticleParam<Scalar>& at(int layer, int head) const {
    return particles[index(layer, head)];
  }
  std::size_t index(int layer, int head) const {
    return static_cast<std::size_t>(layer) * M + head;
  }

  /// (1 / ML) sum ||beta||^2
  Scalar mean_squared_norm() const {
    Scalar total(0);
    for (const auto& p : particles) total += p.squared_norm();
    return total / Scalar(particles.size());
  }

  void validate() const {
    require_shape(L > 0 && M > 0 && particles.size() == static_cast<std::size_t>(L) * M,
                  "ensemble grid");
    for (const auto& p : particles)
      require_shape(p.D() == D && p.hidden() == hidden, "ensemble particle shape");
  }

  template <typename Other>
  ParamEnsemble<Other> cast() const {
    ParamEnsemble<Other> e{L, M, D, hidden, {}};
    e.particles.reserve(particles.size());
    for (const auto& p : particles) e.particles.push_back(p.template cast<Other>());
    return e;
  }
};

template <typename Scalar>
struct ForwardTrace {
  std::vector<Mat<Scalar>> states;  // 2L + 1 half-step states; states[0] = H
  const Mat<Scalar>& output() const { return states.back(); }
};

template <typename Scalar>
struct AdjointTrace {
  std::vector<Mat<Scalar>> adjoints;  // dR(H) / dT at each half-step
};

template <typename Derived>
typename Derived::Scalar readout(const Eigen::MatrixBase<Derived>& t, Eigen::Index row) {
  if (row < 0 || row >= t.rows()) throw DimensionError("readout row out of range");
  return t(row, t.cols() - 1);
}

namespace detail {
[[noreturn]] inline void diverged(const char* layer_kind, int layer) {
  throw NumericalDivergence(std::string("non-finite state after ") + layer_kind + " layer " +
                            std::to_string(layer));
}

template <typename Scalar>
Mat<Scalar> attention_layer(const Mat<Scalar>& z, const ParamEnsemble<Scalar>& theta, int layer) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(z.rows(), z.cols());
  for (int j = 0; j < theta.M; ++j) acc += attn_f(z, theta.at(layer, j).attn);
  return z + (theta.dt() / Scalar(2) / Scalar(theta.M)) * acc;
}

template <typename Scalar>
Mat<Scalar> mlp_layer(const Mat<Scalar>& z, const ParamEnsemble<Scalar>& theta, int layer) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(z.rows(), z.cols());
  for (int j = 0; j < theta.M; ++j) acc += mlp_h(z, theta.at(layer, j).mlp);
  return z + (theta.dt() / Scalar(2) / Scalar(theta.M)) * acc;
}
}  // namespace detail

template <typename Scalar>
ForwardTrace<Scalar> forward(const Mat<Scalar>& h, const ParamEnsemble<Scalar>& theta) {
  theta.validate();
  require_shape(h.rows() == theta.D, "forward input");
  ForwardTrace<Scalar> trace;
  trace.states.reserve(2 * theta.L + 1);
  trace.states.push_back(h);
  for (int l = 0; l < theta.L; ++l) {
    trace.states.push_back(detail::attention_layer(trace.states.back(), theta, l));
    if (!trace.states.back().allFinite()) detail::diverged("attention", l);
    trace.states.push_back(detail::mlp_layer(trace.states.back(), theta, l));
    if (!trace.states.back().allFinite()) detail::diverged("mlp", l);
  }
  return trace;
}

/// Runs the half-steps k, ..., 2L - 1 starting from state z (z stands in for
/// T at half-step k) and returns the final state.
template <typename Scalar>
Mat<Scalar> forward_from(const Mat<Scalar>& z, const ParamEnsemble<Scalar>& theta, int half_step) {
  require_shape(half_step >= 0 && half_step <= 2 * theta.L, "half-step index");
  Mat<Scalar> t = z;
  for (int k = half_step; k < 2 * theta.L; ++k)
    t = k % 2 == 0 ? detail::attention_layer(t, theta, k / 2) : detail::mlp_layer(t, theta, k / 2);
  return t;
}

namespace detail {
/// Reverse sweep seeded with residual * E_read. When grads is non-null the
/// per-particle half-gradients (1/2) grad Tr(enc^T p) are accumulated into it.
template <typename Scalar>
AdjointTrace<Scalar> reverse_sweep(const ForwardTrace<Scalar>& trace,
                                   const ParamEnsemble<Scalar>& theta, Scalar residual,
                                   Eigen::Index row, ParamEnsemble<Scalar>* grads) {
  require_shape(trace.states.size() == static_cast<std::size_t>(2 * theta.L + 1), "trace length");
  const Eigen::Index dim = trace.states[0].rows();
  const Eigen::Index tokens = trace.states[0].cols();
  if (row < 0 || row >= dim) throw DimensionError("readout row out of range");
  const Scalar step = theta.dt() / Scalar(2) / Scalar(theta.M);
  const Scalar half(0.5);

  AdjointTrace<Scalar> adj;
  adj.adjoints.assign(trace.states.size(), Mat<Scalar>());
  Mat<Scalar> p = Mat<Scalar>::Zero(dim, tokens);
  p(row, tokens - 1) = residual;
  adj.adjoints.back() = p;
  for (int l = theta.L - 1; l >= 0; --l) {
    const std::size_t k_mid = 2 * l + 1;
    {
      const Mat<Scalar>& z = trace.states[k_mid];
      Mat<Scalar> acc = Mat<Scalar>::Zero(dim, tokens);
      for (int j = 0; j < theta.M; ++j) {
        auto vjp = mlp_vjp(z, theta.at(l, j).mlp, p, true, grads != nullptr);
        acc += vjp.dZ;
        if (grads) {
          auto& g = grads->at(l, j).mlp;
          g.W1 += half * vjp.dw.W1;
          g.W2 += half * vjp.dw.W2;
        }
      }
      p += step * acc;
      adj.adjoints[k_mid] = p;
    }
    {
      const Mat<Scalar>& z = trace.states[k_mid - 1];
      Mat<Scalar> acc = Mat<Scalar>::Zero(dim, tokens);
      for (int j = 0; j < theta.M; ++j) {
        auto vjp = attn_vjp(z, theta.at(l, j).attn, p, true, grads != nullptr);
        acc += vjp.dZ;
        if (grads) {
          auto& g = grads->at(l, j).attn;
          g.V += half * vjp.dtheta.V;
          g.W += half * vjp.dtheta.W;
        }
      }
      p += step * acc;
      adj.adjoints[k_mid - 1] = p;
    }
  }
  return adj;
}
}  // namespace detail

/// Adjoints p(H, t) = dR(H) / dT(H, t) at all 2L + 1 half-steps.
template <typename Scalar>
AdjointTrace<Scalar> backward(Scalar y, const ForwardTrace<Scalar>& trace,
                              const ParamEnsemble<Scalar>& theta, Eigen::Index row) {
  const Scalar residual = readout(trace.output(), row) - y;
  return detail::reverse_sweep(trace, theta, residual, row,
                               static_cast<ParamEnsemble<Scalar>*>(nullptr));
}

template <typename Scalar>
Scalar risk(const DataSet& ds, const ParamEnsemble<Scalar>& theta) {
  if (ds.empty()) throw std::invalid_argument("risk of an empty dataset");
  Scalar total(0);
  for (const auto& s : ds.samples) {
    const auto trace = forward<Scalar>(s.H.template cast<Scalar>(), theta);
    const Scalar r = readout(trace.output(), ds.readout_row) - Scalar(s.y);
    total += r * r / Scalar(2);
  }
  return total / Scalar(ds.size());
}

template <typename Scalar>
Scalar penalty(const ParamEnsemble<Scalar>& theta, Scalar lambda) {
  return lambda / Scalar(2) * theta.mean_squared_norm();
}

/// Q = R + lambda / (2 M L) sum ||beta||^2
template <typename Scalar>
Scalar objective(const DataSet& ds, const ParamEnsemble<Scalar>& theta, Scalar lambda) {
  return risk(ds, theta) + penalty(theta, lambda);
}

template <typename Scalar>
struct Evaluation {
  Scalar risk{0};
  Scalar objective{0};
  ParamEnsemble<Scalar> gradient;  // ML-scaled: G(beta_{t,j}); empty unless requested
};

/// Risk, objective and (optionally) the ML-scaled gradients
///   G_f = 1/2 E[grad_theta Tr(f(T(t), theta)^T p(t + dt/2))] + lambda theta
///   G_h = 1/2 E[grad_w Tr(h(T(t + dt/2), w)^T p(t + dt))] + lambda w
/// with the sample mean standing in for E, in fixed sample order.
template <typename Scalar>
Evaluation<Scalar> evaluate(const DataSet& ds, const ParamEnsemble<Scalar>& theta, Scalar lambda,
                            bool with_gradient = true) {
  if (ds.empty()) throw std::invalid_argument("evaluate on an empty dataset");
  Evaluation<Scalar> ev;
  if (with_gradient) ev.gradient = ParamEnsemble<Scalar>::zeros(theta.L, theta.M, theta.D, theta.hidden);
  for (const auto& s : ds.samples) {
    const auto trace = forward<Scalar>(s.H.template cast<Scalar>(), theta);
    const Scalar r = readout(trace.output(), ds.readout_row) - Scalar(s.y);
    ev.risk += r * r / Scalar(2);
    if (with_gradient) detail::reverse_sweep(trace, theta, r, ds.readout_row, &ev.gradient);
  }
  const Scalar n(static_cast<double>(ds.size()));
  ev.risk /= n;
  ev.objective = ev.risk + penalty(theta, lambda);
  if (with_gradient) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      ev.gradient.particles[i].scale(Scalar(1) / n);
      ev.gradient.particles[i].add_scaled(lambda, theta.particles[i]);
      if (!ev.gradient.particles[i].all_finite())
        throw NumericalDivergence("non-finite gradient at particle " + std::to_string(i));
    }
  }
  return ev;
}

template <typename Scalar>
ParamEnsemble<Scalar> param_gradient(const DataSet& ds, const ParamEnsemble<Scalar>& theta,
                                     Scalar lambda) {
  return evaluate(ds, theta, lambda, true).gradient;
}

/// Branch index (0: x<=0, 1: 0<x<=1, 2: x>1) of every HuberizedReLU input met
/// during the forward passes over ds; used to keep finite differences away
/// from the activation kinks.
template <typename Scalar>
std::vector<std::int8_t> activation_branches(const DataSet& ds,
                                             const ParamEnsemble<Scalar>& theta) {
  std::vector<std::int8_t> out;
  for (const auto& s : ds.samples) {
    const auto trace = forward<Scalar>(s.H.template cast<Scalar>(), theta);
    for (int l = 0; l < theta.L; ++l) {
      for (int j = 0; j < theta.M; ++j) {
        const Mat<Scalar> pre = theta.at(l, j).mlp.W1 * trace.states[2 * l + 1];
        for (Eigen::Index i = 0; i < pre.size(); ++i) {
          const Scalar x = pre.data()[i];
          out.push_back(x <= Scalar(0) ? 0 : (x <= Scalar(1) ? 1 : 2));
        }
      }
    }
  }
  return out;
}

}  // namespace tmf

#endif  // TMF_MODEL_HPP
