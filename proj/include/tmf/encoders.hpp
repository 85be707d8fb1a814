#ifndef TMF_ENCODERS_HPP
#define TMF_ENCODERS_HPP

// Attention encoder f(Z, theta) = V Z softmax_cols(Z^T W Z), MLP encoder
// h(Z, w) = W2 HuberizedReLU(W1 Z), and their derivatives.
//
// Parameter vectors use column stacking: theta = vec[V] ++ vec[W] and
// w = vec[W1] ++ vec[W2]; a particle is beta = theta ++ w.

#include "tmf/linalg.hpp"

namespace tmf {

template <typename Scalar>
struct AttnParam {
  Mat<Scalar> V;  // D x D
  Mat<Scalar> W;  // D x D

  static AttnParam zeros(Eigen::Index dim) {
    return {Mat<Scalar>::Zero(dim, dim), Mat<Scalar>::Zero(dim, dim)};
  }
  Eigen::Index D() const { return V.rows(); }
  Eigen::Index size() const { return V.size() + W.size(); }
  Scalar squared_norm() const { return V.squaredNorm() + W.squaredNorm(); }
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(size());
    out << V.reshaped(), W.reshaped();
    return out;
  }
};

template <typename Scalar>
struct MlpParam {
  Mat<Scalar> W1;  // m x D, compact block
  Mat<Scalar> W2;  // D x m, homogeneous block

  static MlpParam zeros(Eigen::Index dim, Eigen::Index hidden) {
    return {Mat<Scalar>::Zero(hidden, dim), Mat<Scalar>::Zero(dim, hidden)};
  }
  Eigen::Index D() const { return W2.rows(); }
  Eigen::Index hidden() const { return W1.rows(); }
  Eigen::Index size() const { return W1.size() + W2.size(); }
  Scalar squared_norm() const { return W1.squaredNorm() + W2.squaredNorm(); }
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(size());
    out << W1.reshaped(), W2.reshaped();
    return out;
  }
};

/// One parameter particle beta = (theta, w): an attention head and an MLP head.
/// Gradients with respect to a particle are stored in the same type.
template <typename Scalar>
struct ParticleParam {
  AttnParam<Scalar> attn;
  MlpParam<Scalar> mlp;

  static ParticleParam zeros(Eigen::Index dim, Eigen::Index hidden) {
    return {AttnParam<Scalar>::zeros(dim), MlpParam<Scalar>::zeros(dim, hidden)};
  }
  static Eigen::Index flat_size(Eigen::Index dim, Eigen::Index hidden) {
    return 2 * dim * dim + 2 * hidden * dim;
  }

  Eigen::Index D() const { return attn.D(); }
  Eigen::Index hidden() const { return mlp.hidden(); }
  Eigen::Index size() const { return attn.size() + mlp.size(); }
  Scalar squared_norm() const { return attn.squared_norm() + mlp.squared_norm(); }
  Scalar norm() const { return std::sqrt(squared_norm()); }
  bool all_finite() const {
    return attn.V.allFinite() && attn.W.allFinite() && mlp.W1.allFinite() && mlp.W2.allFinite();
  }

  Vec<Scalar> flatten() const {
    Vec<Scalar> out(size());
    out << attn.flatten(), mlp.flatten();
    return out;
  }

  static ParticleParam unflatten(const Eigen::Ref<const Vec<Scalar>>& v, Eigen::Index dim,
                                 Eigen::Index hidden) {
    require_shape(v.size() == flat_size(dim, hidden), "particle unflatten");
    ParticleParam p;
    Eigen::Index at = 0;
    auto take = [&](Eigen::Index r, Eigen::Index c) {
      Mat<Scalar> m = v.segment(at, r * c).reshaped(r, c);
      at += r * c;
      return m;
    };
    p.attn.V = take(dim, dim);
    p.attn.W = take(dim, dim);
    p.mlp.W1 = take(hidden, dim);
    p.mlp.W2 = take(dim, hidden);
    return p;
  }

  /// this += alpha * other
  ParticleParam& add_scaled(Scalar alpha, const ParticleParam& other) {
    attn.V += alpha * other.attn.V;
    attn.W += alpha * other.attn.W;
    mlp.W1 += alpha * other.mlp.W1;
    mlp.W2 += alpha * other.mlp.W2;
    return *this;
  }
  ParticleParam& scale(Scalar alpha) {
    attn.V *= alpha;
    attn.W *= alpha;
    mlp.W1 *= alpha;
    mlp.W2 *= alpha;
    return *this;
  }

  template <typename Other>
  ParticleParam<Other> cast() const {
    return {{attn.V.template cast<Other>(), attn.W.template cast<Other>()},
            {mlp.W1.template cast<Other>(), mlp.W2.template cast<Other>()}};
  }
};

// ---------------------------------------------------------------------------
// Activations

/// Column-wise softmax, stabilized by subtracting each column's maximum.
template <typename Derived>
Mat<typename Derived::Scalar> softmax_cols(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const Scalar shift = a.col(j).maxCoeff();
    Scalar total(0);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = std::exp(a(i, j) - shift);
      total += out(i, j);
    }
    out.col(j) /= total;
  }
  return out;
}

template <typename Scalar>
Scalar huberized_relu(Scalar x) {
  if (x <= Scalar(0)) return Scalar(0);
  if (x <= Scalar(1)) return x * x / Scalar(2);
  return x - Scalar(0.5);
}

template <typename Scalar>
Scalar huberized_relu_grad(Scalar x) {
  if (x <= Scalar(0)) return Scalar(0);
  if (x <= Scalar(1)) return x;
  return Scalar(1);
}

// ---------------------------------------------------------------------------
// Attention encoder

namespace detail {
template <typename Scalar>
void check_attn(const Mat<Scalar>& z, const AttnParam<Scalar>& p) {
  require_shape(p.V.rows() == z.rows() && p.V.cols() == z.rows(), "attention V");
  require_shape(p.W.rows() == z.rows() && p.W.cols() == z.rows(), "attention W");
}
template <typename Scalar>
void check_mlp(const Mat<Scalar>& z, const MlpParam<Scalar>& p) {
  require_shape(p.W1.cols() == z.rows(), "mlp W1");
  require_shape(p.W2.rows() == z.rows() && p.W2.cols() == p.W1.rows(), "mlp W2");
}
}  // namespace detail

template <typename Scalar>
Mat<Scalar> attn_f(const Mat<Scalar>& z, const AttnParam<Scalar>& p) {
  detail::check_attn(z, p);
  const Mat<Scalar> probs = softmax_cols((z.transpose() * p.W * z).eval());
  return p.V * z * probs;
}

/// Reverse-mode pieces of the scalar Tr(f(Z, theta)^T U).
template <typename Scalar>
struct AttnVjp {
  Mat<Scalar> dZ;
  AttnParam<Scalar> dtheta;
};

template <typename Scalar>
AttnVjp<Scalar> attn_vjp(const Mat<Scalar>& z, const AttnParam<Scalar>& p, const Mat<Scalar>& u,
                         bool want_state = true, bool want_param = true) {
  detail::check_attn(z, p);
  require_shape(u.rows() == z.rows() && u.cols() == z.cols(), "attention cotangent");
  const Mat<Scalar> wz = p.W * z;
  const Mat<Scalar> probs = softmax_cols((z.transpose() * wz).eval());
  const Mat<Scalar> vz = p.V * z;
  // Cotangent of the softmax input, column by column:
  // (diag(s) - s s^T) g with g = (V Z)^T U.
  Mat<Scalar> g = vz.transpose() * u;
  for (Eigen::Index i = 0; i < g.cols(); ++i) {
    const Scalar inner = probs.col(i).dot(g.col(i));
    g.col(i) = probs.col(i).cwiseProduct((g.col(i).array() - inner).matrix());
  }
  AttnVjp<Scalar> out;
  if (want_state) {
    out.dZ = p.V.transpose() * u * probs.transpose() + wz * g.transpose() +
             p.W.transpose() * z * g;
  }
  if (want_param) {
    out.dtheta.V = u * (z * probs).transpose();
    out.dtheta.W = z * g * z.transpose();
  }
  return out;
}

/// Gradient of Tr(f(Z, theta)^T U) with respect to theta, as vec[dV] ++ vec[dW].
template <typename Scalar>
Vec<Scalar> attn_grad_param(const Mat<Scalar>& z, const AttnParam<Scalar>& p,
                            const Mat<Scalar>& u) {
  return attn_vjp(z, p, u, false, true).dtheta.flatten();
}

/// Full Jacobian d vec[f] / d vec[Z], assembled from D x D blocks
///   J_ij = V Z Q_i [e_j z_i^T W^T + delta_ij Z^T W] + P_ij V,
/// where P_ij = softmax(Z^T W Z)(j, i) and Q_i = diag(P_i:) - P_i:^T P_i:.
template <typename Scalar>
Mat<Scalar> attn_jacobian_T(const Mat<Scalar>& z, const AttnParam<Scalar>& p) {
  detail::check_attn(z, p);
  const Eigen::Index dim = z.rows();
  const Eigen::Index tokens = z.cols();
  const Mat<Scalar> probs = softmax_cols((z.transpose() * p.W * z).eval());
  const Mat<Scalar> ztw = z.transpose() * p.W;  // (N+1) x D
  const Mat<Scalar> vz = p.V * z;
  Mat<Scalar> jac = Mat<Scalar>::Zero(dim * tokens, dim * tokens);
  for (Eigen::Index i = 0; i < tokens; ++i) {
    const Vec<Scalar> s = probs.col(i);
    const Mat<Scalar> q = Mat<Scalar>(s.asDiagonal()) - s * s.transpose();
    const Mat<Scalar> vzq = vz * q;  // D x (N+1)
    const Vec<Scalar> wzi = p.W * z.col(i);
    for (Eigen::Index j = 0; j < tokens; ++j) {
      Mat<Scalar> block = vzq.col(j) * wzi.transpose();
      if (i == j) block += vzq * ztw;
      block += probs(j, i) * p.V;
      jac.block(i * dim, j * dim, dim, dim) = block;
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// MLP encoder

template <typename Scalar>
Mat<Scalar> mlp_h(const Mat<Scalar>& z, const MlpParam<Scalar>& p) {
  detail::check_mlp(z, p);
  return p.W2 * (p.W1 * z).unaryExpr([](Scalar x) { return huberized_relu(x); });
}

template <typename Scalar>
struct MlpVjp {
  Mat<Scalar> dZ;
  MlpParam<Scalar> dw;
};

template <typename Scalar>
MlpVjp<Scalar> mlp_vjp(const Mat<Scalar>& z, const MlpParam<Scalar>& p, const Mat<Scalar>& u,
                       bool want_state = true, bool want_param = true) {
  detail::check_mlp(z, p);
  require_shape(u.rows() == z.rows() && u.cols() == z.cols(), "mlp cotangent");
  const Mat<Scalar> pre = p.W1 * z;
  const Mat<Scalar> gpre =
      (p.W2.transpose() * u)
          .cwiseProduct(pre.unaryExpr([](Scalar x) { return huberized_relu_grad(x); }));
  MlpVjp<Scalar> out;
  if (want_state) out.dZ = p.W1.transpose() * gpre;
  if (want_param) {
    out.dw.W1 = gpre * z.transpose();
    out.dw.W2 = u * pre.unaryExpr([](Scalar x) { return huberized_relu(x); }).transpose();
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> mlp_grad_param(const Mat<Scalar>& z, const MlpParam<Scalar>& p, const Mat<Scalar>& u) {
  return mlp_vjp(z, p, u, false, true).dw.flatten();
}

/// Block diagonal: token i maps through W2 diag(HuberizedReLU'(W1 z_i)) W1.
template <typename Scalar>
Mat<Scalar> mlp_jacobian_T(const Mat<Scalar>& z, const MlpParam<Scalar>& p) {
  detail::check_mlp(z, p);
  const Eigen::Index dim = z.rows();
  const Mat<Scalar> pre = p.W1 * z;
  Mat<Scalar> jac = Mat<Scalar>::Zero(dim * z.cols(), dim * z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    const Vec<Scalar> slope = pre.col(i).unaryExpr([](Scalar x) { return huberized_relu_grad(x); });
    jac.block(i * dim, i * dim, dim, dim) = p.W2 * slope.asDiagonal() * p.W1;
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Averaged encoder g = (f + h) / 2

template <typename Scalar>
Mat<Scalar> avg_g(const Mat<Scalar>& z, const ParticleParam<Scalar>& b) {
  return (attn_f(z, b.attn) + mlp_h(z, b.mlp)) / Scalar(2);
}

/// Gradient of Tr(g(Z, beta)^T U) with respect to beta (particle-shaped).
template <typename Scalar>
ParticleParam<Scalar> avg_grad_param(const Mat<Scalar>& z, const ParticleParam<Scalar>& b,
                                     const Mat<Scalar>& u) {
  ParticleParam<Scalar> out{attn_vjp(z, b.attn, u, false, true).dtheta,
                            mlp_vjp(z, b.mlp, u, false, true).dw};
  return out.scale(Scalar(0.5));
}

template <typename Scalar>
Mat<Scalar> avg_jacobian_T(const Mat<Scalar>& z, const ParticleParam<Scalar>& b) {
  return (attn_jacobian_T(z, b.attn) + mlp_jacobian_T(z, b.mlp)) / Scalar(2);
}

}  // namespace tmf

#endif  // TMF_ENCODERS_HPP
