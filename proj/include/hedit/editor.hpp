#pragma once

// Certificates, strength scheduling, the closed-form shrinkage edit and the
// gate that decides whether a token is edited at all.

#include "hedit/subspace.hpp"

#include <algorithm>
#include <string>

namespace hedit {

/// Energy fractions of a state inside U (vcr) and inside P (pcr).
struct Certificates {
  double vcr = 0.0;
  double pcr = 0.0;
};

struct Strengths {
  double lambda_n = 0.0;  // non-visual suppression
  double lambda_p = 0.0;  // anti-prior suppression
};

struct EditConfig {
  Index r = 8;                // evidence rank
  Index q = 5;                // prior rank
  double kappa = 0.60;        // base visual strength
  double lambda0 = 0.26;      // base prior strength
  double lambda_max = 3.6;    // strength cap
  double eps_cert = 1e-8;     // certificate / relevance stabilizer
  double gamma_v = 0.25;      // edit when vcr < gamma_v
  double gamma_p = 0.10;      // ... or pcr > gamma_p
  Index window = 512;         // text-cache capacity
  Index stride = 1;           // visual-subspace re-estimation stride
  int anchor_layer = 26;      // informational; traces are captured at this layer
  Index d = 0;                // expected hidden size, 0 = take from the trace

  /// Empty string when valid, otherwise the first violated constraint.
  std::string validation_error() const {
    if (r < 1) return "r must be >= 1";
    if (q < 0) return "q must be >= 0";
    if (!(kappa > 0.0)) return "kappa must be > 0";
    if (!(lambda0 > 0.0)) return "lambda0 must be > 0";
    if (!(lambda_max > 0.0)) return "lambda_max must be > 0";
    if (!(eps_cert > 0.0)) return "eps_cert must be > 0";
    if (!(gamma_v >= 0.0 && gamma_v <= 1.0)) return "gamma_v must lie in [0,1]";
    if (!(gamma_p >= 0.0 && gamma_p <= 1.0)) return "gamma_p must lie in [0,1]";
    if (window < 1) return "window must be >= 1";
    if (stride < 1) return "stride must be >= 1";
    if (d < 0) return "d must be >= 0";
    return {};
  }

  void validate() const {
    if (auto err = validation_error(); !err.empty()) {
      throw ContractViolation("EditConfig: " + err);
    }
  }

  /// Base defaults; identical to `llava7b` except eps_cert = 1e-8.
  static EditConfig defaults() { return {}; }

  /// Hyperparameters for a 7B LLaVA-style model (32 layers, anchor at 26).
  static EditConfig llava7b() {
    EditConfig c;
    c.eps_cert = 1e-6;
    return c;
  }
};

struct EditOutcome {
  HiddenState edited;
  bool gated = false;
  Strengths strengths;
  double alpha_p = 1.0;
  double alpha_r = 1.0;
  Certificates cert_before;
  Certificates cert_after;
  double delta_u_norm = 0.0;  // ||Pi_U (h_final - h)||
  double delta_p_norm = 0.0;  // ||Pi_P (h_final - h)||
};

inline Certificates certificates(const Decomposition& dec, double eps_cert) {
  const double denom = dec.source.squaredNorm() + eps_cert;
  return {dec.visual.squaredNorm() / denom, dec.prior.squaredNorm() / denom};
}

/// Inverse-proportional scheduling, clamped to [0, lambda_max].
inline Strengths schedule(const Certificates& cert, const EditConfig& cfg) {
  const double eps = cfg.eps_cert;
  const double ln = cfg.kappa * (1.0 - cert.vcr) / (cert.vcr + eps);
  const double lp = cfg.lambda0 * cert.pcr / (1.0 - cert.pcr + eps);
  // vcr/pcr can exceed 1 by rounding; keep the strengths non-negative.
  return {std::clamp(ln, 0.0, cfg.lambda_max), std::clamp(lp, 0.0, cfg.lambda_max)};
}

inline double prior_shrinkage(const Strengths& s) { return 1.0 / (1.0 + s.lambda_n + s.lambda_p); }
inline double residual_shrinkage(const Strengths& s) { return 1.0 / (1.0 + s.lambda_n); }

/// Minimiser of 1/2||delta||^2 + lambda_n/2 ||Pi_perp(h+delta)||^2
///              + lambda_p/2 ||Pi_P(h+delta)||^2, returned as h + delta.
inline HiddenState closed_form_edit(const Decomposition& dec, const Strengths& s) {
  return dec.visual + prior_shrinkage(s) * dec.prior + residual_shrinkage(s) * dec.residual;
}

/// Strict inequalities: a certificate sitting exactly on a threshold does not edit.
inline bool gate(const Certificates& cert, const EditConfig& cfg) {
  return cert.vcr < cfg.gamma_v || cert.pcr > cfg.gamma_p;
}

inline EditOutcome edit_token(const HiddenState& h, const OrthonormalBasis& u,
                              const OrthonormalBasis& p, const EditConfig& cfg) {
  const Decomposition dec = decompose(h, u, p);
  EditOutcome out;
  out.cert_before = certificates(dec, cfg.eps_cert);
  out.gated = gate(out.cert_before, cfg);
  if (!out.gated) {
    out.edited = h;
    out.cert_after = out.cert_before;
    return out;
  }
  out.strengths = schedule(out.cert_before, cfg);
  out.alpha_p = prior_shrinkage(out.strengths);
  out.alpha_r = residual_shrinkage(out.strengths);
  out.edited = closed_form_edit(dec, out.strengths);
  out.cert_after = certificates(decompose(out.edited, u, p), cfg.eps_cert);

  const Vector delta = out.edited - h;
  out.delta_u_norm = u.project(delta).norm();
  out.delta_p_norm = p.project(delta).norm();
  return out;
}

}  // namespace hedit
