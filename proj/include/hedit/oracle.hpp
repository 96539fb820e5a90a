#pragma once

// Brute-force reference computations. Everything here materialises dense
// d x d matrices and is deliberately kept off the per-token path; the
// property suites compare the fast path against these.

#include "hedit/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hedit::oracle {

inline constexpr Index kMaxDim = 512;

struct DenseProjectors {
  Matrix pi_u;
  Matrix pi_p;
  Matrix pi_r;
};

namespace detail {

inline void require_budget(Index d, const char* what) {
  if (d > kMaxDim) {
    hedit::detail::fail_contract(what, ": d = ", d, " exceeds the dense budget of ", kMaxDim);
  }
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace detail

inline DenseProjectors dense_projectors(const OrthonormalBasis& u, const OrthonormalBasis& p) {
  const Index d = u.dim();
  detail::require_budget(d, "dense_projectors");
  DenseProjectors out;
  out.pi_u = u.columns() * u.columns().transpose();
  out.pi_p = p.columns() * p.columns().transpose();
  out.pi_r = Matrix::Identity(d, d) - out.pi_u - out.pi_p;
  return out;
}

/// Solves (I + lambda_n Pi_perp + lambda_p Pi_P) x = h densely and returns
/// x = h + delta*, the minimiser of the editing objective.
inline HiddenState qp_oracle(const HiddenState& h, const OrthonormalBasis& u,
                             const OrthonormalBasis& p, double lambda_n, double lambda_p) {
  const Index d = u.dim();
  detail::require_budget(d, "qp_oracle");
  require_dim(h, d, "qp_oracle");
  const auto proj = dense_projectors(u, p);
  const Matrix pi_perp = Matrix::Identity(d, d) - proj.pi_u;
  const Matrix system = Matrix::Identity(d, d) + lambda_n * pi_perp + lambda_p * proj.pi_p;
  const Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    throw std::runtime_error("qp_oracle: system is ill-conditioned or not positive definite");
  }
  return llt.solve(h);
}

/// 1/2||delta||^2 + lambda_n/2 ||Pi_perp(h+delta)||^2 + lambda_p/2 ||Pi_P(h+delta)||^2
inline double qp_objective(const HiddenState& h, const Vector& delta, const OrthonormalBasis& u,
                           const OrthonormalBasis& p, double lambda_n, double lambda_p) {
  const auto proj = dense_projectors(u, p);
  const Vector x = h + delta;
  const Vector perp = x - proj.pi_u * x;
  return 0.5 * delta.squaredNorm() + 0.5 * lambda_n * perp.squaredNorm() +
         0.5 * lambda_p * (proj.pi_p * x).squaredNorm();
}

/// ||delta + lambda_n Pi_perp(h+delta) + lambda_p Pi_P(h+delta)||, the
/// gradient norm of the objective at delta.
inline double stationarity_residual(const HiddenState& h, const Vector& delta,
                                    const OrthonormalBasis& u, const OrthonormalBasis& p,
                                    double lambda_n, double lambda_p) {
  const auto proj = dense_projectors(u, p);
  const Index d = u.dim();
  const Vector x = h + delta;
  const Vector grad =
      delta + lambda_n * (Matrix::Identity(d, d) - proj.pi_u) * x + lambda_p * proj.pi_p * x;
  return grad.norm();
}

/// Eigenvectors of the dense weighted covariance V^T diag(w) V, largest
/// first, sign-normalised.
inline OrthonormalBasis brute_force_weighted_pca(const VisualFeatureMatrix& v,
                                                 const RelevanceWeights& w, Index r) {
  const Index d = v.dim();
  detail::require_budget(d, "brute_force_weighted_pca");
  Matrix cov = Matrix::Zero(d, d);
  for (Index i = 0; i < v.count(); ++i) {
    const Vector row = v.rows().row(i).transpose();
    cov += w[i] * row * row.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Index k = std::min(r, d);
  Matrix top(d, k);
  Vector sigma(k);
  for (Index j = 0; j < k; ++j) {
    top.col(j) = eig.eigenvectors().col(d - 1 - j);
    sigma[j] = std::sqrt(std::max(eig.eigenvalues()[d - 1 - j], 0.0));
  }
  hedit::detail::apply_sign_convention(top);
  return OrthonormalBasis(std::move(top), BasisKind::Visual, {}, std::move(sigma));
}

/// Eigenvalues of V^T diag(w) V in descending order.
inline Vector weighted_covariance_spectrum(const VisualFeatureMatrix& v, const RelevanceWeights& w) {
  const Index d = v.dim();
  detail::require_budget(d, "weighted_covariance_spectrum");
  const Matrix weighted = w.values().cwiseSqrt().asDiagonal() * v.rows();
  const Matrix cov = weighted.transpose() * weighted;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

struct ProjectorAudit {
  double symmetry = 0.0;      // max over projectors of ||Pi - Pi^T||_max
  double idempotence = 0.0;   // max over projectors of ||Pi^2 - Pi||_max
  double cross_up = 0.0;      // ||Pi_U Pi_P||_max
  double cross_ur = 0.0;      // ||Pi_U Pi_R||_max
  double cross_pr = 0.0;      // ||Pi_P Pi_R||_max
  double completeness = 0.0;  // ||Pi_U + Pi_P + Pi_R - I||_max

  double worst() const {
    return std::max({symmetry, idempotence, cross_up, cross_ur, cross_pr, completeness});
  }
};

inline ProjectorAudit projector_audit(const OrthonormalBasis& u, const OrthonormalBasis& p) {
  const auto proj = dense_projectors(u, p);
  const Index d = u.dim();
  ProjectorAudit a;
  for (const Matrix* m : {&proj.pi_u, &proj.pi_p, &proj.pi_r}) {
    a.symmetry = std::max(a.symmetry, detail::max_abs(*m - m->transpose()));
    a.idempotence = std::max(a.idempotence, detail::max_abs((*m) * (*m) - *m));
  }
  a.cross_up = detail::max_abs(proj.pi_u * proj.pi_p);
  a.cross_ur = detail::max_abs(proj.pi_u * proj.pi_r);
  a.cross_pr = detail::max_abs(proj.pi_p * proj.pi_r);
  a.completeness = detail::max_abs(proj.pi_u + proj.pi_p + proj.pi_r - Matrix::Identity(d, d));
  return a;
}

/// Largest principal angle (radians) between span(a) and span(b), both
/// orthonormal. Computed from sines so that tiny angles stay accurate.
/// Returns pi/2 when the ranks differ.
inline double max_principal_angle(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) return std::acos(0.0);
  if (a.cols() == 0) return 0.0;
  const Matrix leftover = b - a * (a.transpose() * b);
  const Eigen::JacobiSVD<Matrix> svd(leftover);
  const double s = std::min(svd.singularValues()[0], 1.0);
  return std::asin(s);
}

}  // namespace hedit::oracle
