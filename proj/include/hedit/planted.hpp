#pragma once

// Synthetic decode traces with known ("planted") visual and prior subspaces.

#include "hedit/trace.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace hedit {

struct PlantSpec {
  Index d = 64;
  Index n_v = 32;
  Index n_tokens = 64;   // generated tokens
  Index n_prompt = 0;    // prompt tokens emitted before generation
  Index r_true = 4;
  Index q_true = 4;
  double visual_energy = 1.0;
  double prior_energy = 0.0;
  double residual_energy = 0.0;
  double noise_sigma = 0.0;
  bool prompt_in_cache = true;
  std::uint64_t seed = 0;

  std::string validation_error() const {
    if (d < 1 || n_v < 1 || n_tokens < 1) return "d, n_v and n_tokens must be >= 1";
    if (n_prompt < 0) return "n_prompt must be >= 0";
    if (r_true < 1 || q_true < 1) return "r_true and q_true must be >= 1";
    if (r_true + q_true > d) return "r_true + q_true must not exceed d";
    if (!(visual_energy >= 0.0 && prior_energy >= 0.0 && residual_energy >= 0.0))
      return "energies must be >= 0";
    if (!(visual_energy + prior_energy + residual_energy > 0.0))
      return "at least one energy must be positive";
    if (residual_energy > 0.0 && r_true + q_true == d)
      return "residual energy needs r_true + q_true < d";
    if (!(noise_sigma >= 0.0)) return "noise_sigma must be >= 0";
    return {};
  }
};

struct PlantedTrace {
  Trace trace;
  GroundTruth truth;
};

namespace detail {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Vector gaussian(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal_(rng_);
    return v;
  }
  Matrix gaussian(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal_(rng_);
    return m;
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  /// Inclusive on both ends.
  Index uniform_int(Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng_);
  }
  bool coin(double p_true) { return uniform(0.0, 1.0) < p_true; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Unit vector drawn from span(basis).
inline Vector unit_in(const Matrix& basis, Sampler& s) {
  Vector v = basis * s.gaussian(basis.cols());
  return v / v.norm();
}

// Unit vector orthogonal to both planted bases.
inline Vector unit_outside(const Matrix& u, const Matrix& p, Sampler& s) {
  Vector v = s.gaussian(u.rows());
  v -= u * (u.transpose() * v);
  v -= p * (p.transpose() * v);
  return v / v.norm();
}

inline void append(std::vector<float>& flat, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) flat.push_back(static_cast<float>(v[i]));
}

}  // namespace detail

/// Draws orthonormal U* (d x r_true) and P* (d x q_true) with U*^T P* = 0 and
/// builds a trace whose
///  * visual rows lie in span(U*) plus isotropic noise of std noise_sigma,
///  * edit states carry exactly the requested energy in span(U*), span(P*)
///    and their joint complement,
///  * text anchor states are dominated by span(P*) content.
/// Deterministic for a given seed.
inline PlantedTrace gen_planted_trace(const PlantSpec& spec) {
  if (auto err = spec.validation_error(); !err.empty()) {
    throw ContractViolation("PlantSpec: " + err);
  }
  detail::Sampler s(spec.seed);
  const Index d = spec.d;

  const Eigen::HouseholderQR<Matrix> qr(s.gaussian(d, spec.r_true + spec.q_true));
  const Matrix frame = qr.householderQ() * Matrix::Identity(d, spec.r_true + spec.q_true);
  Matrix u_true = frame.leftCols(spec.r_true);
  Matrix p_true = frame.rightCols(spec.q_true);

  PlantedTrace out;
  auto& h = out.trace.header;
  h.d = static_cast<std::uint32_t>(d);
  h.n_v = static_cast<std::uint32_t>(spec.n_v);
  h.n_tokens = static_cast<std::uint32_t>(spec.n_prompt + spec.n_tokens);
  h.flags = spec.prompt_in_cache ? kFlagPromptInTextCache : 0u;

  // Decaying per-direction scales keep the planted spectra non-degenerate.
  auto decay = [](Index k) {
    Vector sc(k);
    for (Index j = 0; j < k; ++j) sc[j] = 1.0 / (1.0 + 0.5 * static_cast<double>(j));
    return sc;
  };
  const Vector visual_scale = decay(spec.r_true);
  const Vector prior_scale = decay(spec.q_true);

  auto& body = out.trace.body;
  for (Index i = 0; i < spec.n_v; ++i) {
    Vector row = u_true * s.gaussian(spec.r_true).cwiseProduct(visual_scale);
    row += spec.noise_sigma * s.gaussian(d);
    detail::append(body.visual, row);
  }

  const double a = std::sqrt(spec.visual_energy);
  const double b = std::sqrt(spec.prior_energy);
  const double c = std::sqrt(spec.residual_energy);
  for (Index t = 0; t < spec.n_prompt + spec.n_tokens; ++t) {
    Vector edit = Vector::Zero(d);
    if (a > 0.0) edit += a * detail::unit_in(u_true, s);
    if (b > 0.0) edit += b * detail::unit_in(p_true, s);
    if (c > 0.0) edit += c * detail::unit_outside(u_true, p_true, s);

    Vector anchor = p_true * s.gaussian(spec.q_true).cwiseProduct(prior_scale);
    if (spec.r_true + spec.q_true < d) anchor += 0.1 * detail::unit_outside(u_true, p_true, s);

    detail::append(body.edit_states, edit);
    detail::append(body.anchor_states, anchor);
    body.kinds.push_back(t < spec.n_prompt ? TokenKind::Prompt : TokenKind::Generated);
  }

  out.truth.visual = std::move(u_true);
  out.truth.prior = std::move(p_true);
  return out;
}

}  // namespace hedit
