#pragma once

// Visual-evidence / anti-prior subspace estimation and the three-way
// orthogonal decomposition of hidden states.
//
// Both subspaces are top singular directions (in state space R^d) of a
// short-and-wide matrix A (n x d, n = number of cached tokens). They are
// computed through the n x n kernel A A^T followed by one Rayleigh-Ritz
// refinement on A itself, so the per-call cost is O(n^2 d + n^3 + n d k)
// and linear in d. For the visual features the unweighted kernel V V^T is
// computed once per image; per-token reweighting is then O(n_v^2).

#include "hedit/core.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>

namespace hedit {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Anchor-layer features of the visual tokens of one image (n_v x d), with
/// the derived quantities every per-token call needs. Immutable once built.
class VisualFeatureMatrix {
 public:
  VisualFeatureMatrix(Matrix rows, int source_layer = 0)
      : rows_(std::move(rows)), source_layer_(source_layer) {
    if (rows_.rows() < 1 || rows_.cols() < 1) {
      detail::fail_contract("VisualFeatureMatrix: need n_v >= 1 and d >= 1, got ",
                            rows_.rows(), "x", rows_.cols());
    }
    if (!rows_.allFinite()) detail::fail_contract("VisualFeatureMatrix: non-finite entry");
    row_norms_ = rows_.rowwise().norm();
    kernel_.noalias() = rows_ * rows_.transpose();
  }

  const Matrix& rows() const { return rows_; }
  Index count() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  int source_layer() const { return source_layer_; }
  const Vector& row_norms() const { return row_norms_; }
  /// V V^T (n_v x n_v).
  const Matrix& kernel() const { return kernel_; }

 private:
  Matrix rows_;
  int source_layer_;
  Vector row_norms_;
  Matrix kernel_;
};

/// Softmax relevance of each visual token to the current state.
class RelevanceWeights {
 public:
  explicit RelevanceWeights(Vector weights) : weights_(std::move(weights)) {
    if (weights_.size() < 1) detail::fail_contract("RelevanceWeights: empty");
    if (!weights_.allFinite() || weights_.minCoeff() < 0.0) {
      detail::fail_contract("RelevanceWeights: weights must be finite and >= 0");
    }
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > 1e-12) {
      detail::fail_contract("RelevanceWeights: weights sum to ", total, ", not 1");
    }
  }

  const Vector& values() const { return weights_; }
  Index size() const { return weights_.size(); }
  double operator[](Index i) const { return weights_[i]; }

 private:
  Vector weights_;
};

enum class BasisKind : std::uint8_t { Visual, AntiPrior };

struct BasisFlags {
  bool gap_degenerate = false;
  bool numerically_zero = false;
};

/// A d x k column-orthonormal matrix (k may be 0).
///
/// Flags carry estimation diagnostics: `gap_degenerate` when the spectral gap
/// at the truncation rank is below 1e-10 (the subspace is not unique there),
/// `numerically_zero` when the source matrix had Frobenius norm <= 1e-12.
class OrthonormalBasis {
 public:
  static constexpr double kOrthonormalityTolerance = 1e-8;

  using Flags = BasisFlags;

  /// Validating constructor.
  OrthonormalBasis(Matrix columns, BasisKind kind, Flags flags = {},
                   Vector singular_values = {})
      : columns_(std::move(columns)),
        kind_(kind),
        flags_(flags),
        singular_values_(std::move(singular_values)) {
    if (columns_.cols() > columns_.rows()) {
      detail::fail_contract("OrthonormalBasis: k = ", columns_.cols(), " exceeds d = ",
                            columns_.rows());
    }
    const double defect = defect_of(columns_);
    if (!(defect <= kOrthonormalityTolerance)) {
      detail::fail_contract("OrthonormalBasis: orthonormality defect ", defect,
                            " exceeds ", kOrthonormalityTolerance);
    }
  }

  /// Empty basis (k = 0) in R^d.
  static OrthonormalBasis empty(Index d, BasisKind kind, Flags flags = {}) {
    return OrthonormalBasis(Matrix(d, 0), kind, flags);
  }

  /// Skips validation. For audits and fault-injection tests only.
  static OrthonormalBasis unchecked(Matrix columns, BasisKind kind) {
    OrthonormalBasis b(Tag{}, std::move(columns), kind);
    return b;
  }

  const Matrix& columns() const { return columns_; }
  Index dim() const { return columns_.rows(); }
  Index rank() const { return columns_.cols(); }
  bool is_empty() const { return columns_.cols() == 0; }
  BasisKind kind() const { return kind_; }
  const Flags& flags() const { return flags_; }
  /// Singular values of the source matrix along the returned directions,
  /// descending. Empty when not produced by an estimator.
  const Vector& singular_values() const { return singular_values_; }

  /// Pi_B x = B (B^T x), without forming B B^T.
  Vector project(const Vector& x) const { return columns_ * (columns_.transpose() * x); }

  static double defect_of(const Matrix& b) {
    if (b.cols() == 0) return 0.0;
    const Matrix gram = b.transpose() * b;
    return detail::max_abs(gram - Matrix::Identity(b.cols(), b.cols()));
  }

 private:
  struct Tag {};
  OrthonormalBasis(Tag, Matrix columns, BasisKind kind)
      : columns_(std::move(columns)), kind_(kind) {}

  Matrix columns_;
  BasisKind kind_;
  Flags flags_;
  Vector singular_values_;
};

/// h split into its visual, anti-prior and residual components.
struct Decomposition {
  HiddenState source;
  Vector visual;
  Vector prior;
  Vector residual;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// ||B^T B - I_k||_max; 0 for an empty basis.
inline double orthonormality_defect(const OrthonormalBasis& b) {
  return OrthonormalBasis::defect_of(b.columns());
}

/// w_i = softmax_i( v_i^T h / (||v_i|| ||h|| + eps) ).
///
/// A zero state makes every score 0 and the weights uniform.
inline RelevanceWeights relevance_weights(const VisualFeatureMatrix& v, const HiddenState& h,
                                          double eps) {
  require_dim(h, v.dim(), "relevance_weights");
  require_finite(h, "relevance_weights");
  if (!(eps > 0.0)) detail::fail_contract("relevance_weights: eps must be > 0, got ", eps);

  const double h_norm = h.norm();
  Vector scores = v.rows() * h;
  scores.array() /= (v.row_norms().array() * h_norm + eps);
  const double top = scores.maxCoeff();
  Vector w = (scores.array() - top).exp().matrix();
  w /= w.sum();
  return RelevanceWeights(std::move(w));
}

namespace detail {

struct SpectralDirections {
  Matrix directions;       // d x k, orthonormal
  Vector singular_values;  // k, descending
  bool gap_degenerate = false;
  bool numerically_zero = false;
};

inline constexpr double kZeroMatrixNorm = 1e-12;
inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kGapTolerance = 1e-10;

// Top-k right singular vectors of `a` (n x d), given kernel = a a^T.
// Returns fewer than k directions when the numerical rank is lower.
inline SpectralDirections top_right_singular(const Matrix& a, const Matrix& kernel, Index k) {
  SpectralDirections out;
  const Index n = a.rows();
  const Index d = a.cols();
  out.directions.resize(d, 0);
  if (n == 0 || k == 0) return out;
  if (a.norm() <= kZeroMatrixNorm) {
    out.numerically_zero = true;
    return out;
  }
  k = std::min({k, n, d});

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(kernel);
  const Vector& evals = eig.eigenvalues();  // ascending
  Matrix top(n, k);
  for (Index j = 0; j < k; ++j) top.col(j) = eig.eigenvectors().col(n - 1 - j);

  // Candidate directions in R^d, then one Rayleigh-Ritz step against `a`
  // to recover accuracy lost by squaring in the kernel.
  const Matrix z = a.transpose() * top;
  const Eigen::HouseholderQR<Matrix> qr(z);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  const Matrix projected = a * q;
  const Eigen::JacobiSVD<Matrix> svd(projected, Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();

  Index keep = 0;
  while (keep < k && sigma[keep] > kRankTolerance * sigma[0]) ++keep;

  out.directions = q * svd.matrixV().leftCols(keep);
  out.singular_values = sigma.head(keep);
  apply_sign_convention(out.directions);

  if (keep == k && keep > 0 && k < std::min(n, d)) {
    const double next = std::sqrt(std::max(evals[n - 1 - k], 0.0));
    out.gap_degenerate = (sigma[keep - 1] - next) < kGapTolerance * sigma[0];
  }
  return out;
}

}  // namespace detail

/// Top-r right singular directions of W^{1/2} V, W = diag(w): the weighted
/// principal axes of the visual features. The returned rank is
/// min(r, numerical rank); an all-zero weighted matrix yields an empty basis
/// flagged `numerically_zero`.
inline OrthonormalBasis visual_basis(const VisualFeatureMatrix& v, const RelevanceWeights& w,
                                     Index r) {
  if (r < 1) detail::fail_contract("visual_basis: rank must be >= 1, got ", r);
  if (w.size() != v.count()) {
    detail::fail_contract("visual_basis: ", w.size(), " weights for ", v.count(), " rows");
  }
  const Vector root = w.values().cwiseSqrt();
  const Matrix weighted = root.asDiagonal() * v.rows();
  const Matrix kernel = root.asDiagonal() * v.kernel() * root.asDiagonal();
  auto spec = detail::top_right_singular(weighted, kernel, r);
  return OrthonormalBasis(std::move(spec.directions), BasisKind::Visual,
                          {spec.gap_degenerate, spec.numerically_zero},
                          std::move(spec.singular_values));
}

/// Top-q directions of the text cache after projecting out span(U),
/// followed by one Gram-Schmidt pass against U. An empty cache gives an
/// empty basis.
inline OrthonormalBasis anti_prior_basis(const Matrix& text, const OrthonormalBasis& u, Index q) {
  const Index d = u.dim();
  if (text.cols() != d) {
    detail::fail_contract("anti_prior_basis: text cache has ", text.cols(),
                          " columns, basis lives in R^", d);
  }
  if (q < 0) detail::fail_contract("anti_prior_basis: negative rank ", q);
  if (text.rows() == 0 || q == 0) return OrthonormalBasis::empty(d, BasisKind::AntiPrior);
  if (!text.allFinite()) detail::fail_contract("anti_prior_basis: non-finite text cache");

  const Matrix& uc = u.columns();
  Matrix complement = text;
  if (!u.is_empty()) complement.noalias() -= (text * uc) * uc.transpose();
  const Matrix kernel = complement * complement.transpose();
  auto spec = detail::top_right_singular(complement, kernel, q);

  Matrix p = std::move(spec.directions);
  Vector sigma = std::move(spec.singular_values);
  if (!u.is_empty() && p.cols() > 0) {
    p.noalias() -= uc * (uc.transpose() * p);
    Index kept = 0;
    for (Index j = 0; j < p.cols(); ++j) {
      Vector col = p.col(j);
      for (Index i = 0; i < kept; ++i) col -= p.col(i).dot(col) * p.col(i);
      const double nrm = col.norm();
      if (nrm < 0.5) continue;  // direction was almost entirely inside span(U)
      p.col(kept) = col / nrm;
      sigma[kept] = sigma[j];
      ++kept;
    }
    p.conservativeResize(Eigen::NoChange, kept);
    sigma.conservativeResize(kept);
    detail::apply_sign_convention(p);
  }
  return OrthonormalBasis(std::move(p), BasisKind::AntiPrior,
                          {spec.gap_degenerate, spec.numerically_zero}, std::move(sigma));
}

/// ||U^T P||_max.
inline double cross_defect(const OrthonormalBasis& u, const OrthonormalBasis& p) {
  if (u.is_empty() || p.is_empty()) return 0.0;
  return detail::max_abs(u.columns().transpose() * p.columns());
}

inline constexpr double kCrossTolerance = 1e-8;

/// h_U = U U^T h, h_P = P P^T h, h_R = h - h_U - h_P, in O(d (r + q)).
inline Decomposition decompose(const HiddenState& h, const OrthonormalBasis& u,
                               const OrthonormalBasis& p) {
  if (u.dim() != p.dim()) {
    detail::fail_contract("decompose: U in R^", u.dim(), " but P in R^", p.dim());
  }
  require_dim(h, u.dim(), "decompose");
  require_finite(h, "decompose");
  const double cross = cross_defect(u, p);
  if (!(cross <= kCrossTolerance)) {
    detail::fail_contract("decompose: bases not orthogonal, ||U^T P||_max = ", cross);
  }
  Decomposition dec;
  dec.source = h;
  dec.visual = u.project(h);
  dec.prior = p.project(h);
  dec.residual = h - dec.visual - dec.prior;
  return dec;
}

}  // namespace hedit
