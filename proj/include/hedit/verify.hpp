#pragma once

// Randomised property suites for the editing guarantees. Each property
// draws independent instances from a per-trial seed, so a failure can be
// reproduced from the reported seed alone.

#include "hedit/editor.hpp"
#include "hedit/oracle.hpp"
#include "hedit/planted.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hedit::verify {

enum class Suite { Props, Oracle, All };

/// Deliberate corruption used to check that the harness can fail.
enum class Fault {
  None,
  LeakPriorIntoVisual,  // replaces P's first column by U's first column
  PerturbEdit,          // scales the closed-form result by (1 + 1e-3)
};

struct Options {
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  Fault fault = Fault::None;
};

struct Measure {
  std::string label;
  double worst = 0.0;
  double tolerance = 0.0;
  bool ok() const { return worst <= tolerance; }
};

struct PropertyResult {
  std::string name;
  std::size_t trials = 0;
  std::vector<Measure> measures;
  std::vector<std::string> failures;  // extra failed conditions
  bool failed_seed_known = false;
  std::uint64_t failing_seed = 0;

  bool passed() const {
    return failures.empty() &&
           std::all_of(measures.begin(), measures.end(), [](const Measure& m) { return m.ok(); });
  }
};

inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t i) {
  // splitmix64 finaliser over a combined key
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream * 1000003ull + i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Instance generation
// ---------------------------------------------------------------------------

struct Instance {
  HiddenState h;
  OrthonormalBasis u;
  OrthonormalBasis p;
};

/// Bases produced by the estimators on random features, and a state whose
/// energy split across U, P and the remainder varies widely.
inline Instance random_instance(detail::Sampler& s, Index d, Index r, Index q) {
  const Index n_v = s.uniform_int(std::max<Index>(2, r), 3 * r + 8);
  const VisualFeatureMatrix v(s.gaussian(n_v, d));
  const HiddenState probe = s.gaussian(d);
  const auto w = relevance_weights(v, probe, 1e-8);
  OrthonormalBasis u = visual_basis(v, w, r);

  const Index n_t = s.uniform_int(0, 2 * q + 6);
  OrthonormalBasis p = anti_prior_basis(s.gaussian(n_t, d), u, q);

  const double a = s.coin(0.1) ? 0.0 : s.uniform(0.0, 2.0);
  const double b = s.coin(0.1) ? 0.0 : s.uniform(0.0, 2.0);
  const double c = s.coin(0.1) ? 0.0 : s.uniform(0.0, 2.0);
  HiddenState h = a * u.project(s.gaussian(d)) + b * p.project(s.gaussian(d)) + c * s.gaussian(d);
  if (h.squaredNorm() == 0.0) h = s.gaussian(d);
  return {std::move(h), std::move(u), std::move(p)};
}

inline Index pick(detail::Sampler& s, std::initializer_list<Index> choices) {
  const auto i = s.uniform_int(0, static_cast<Index>(choices.size()) - 1);
  return *(choices.begin() + i);
}

inline void note_failure(PropertyResult& res, std::uint64_t seed) {
  if (!res.failed_seed_known) {
    res.failed_seed_known = true;
    res.failing_seed = seed;
  }
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

/// Closed-form edit vs. a dense solve of the quadratic program.
inline PropertyResult closed_form_vs_oracle(const Options& opt) {
  PropertyResult res;
  res.name = "closed_form_vs_oracle";
  Measure rel{"relative L2 gap", 0.0, 1e-6};
  Measure stat{"stationarity residual / ||h||", 0.0, 1e-9};
  Measure obj{"objective increase over delta = 0", 0.0, 0.0};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    const auto seed = trial_seed(opt.seed, 1, i);
    detail::Sampler s(seed);
    const Index d = pick(s, {16, 64});
    const auto inst = random_instance(s, d, s.uniform_int(1, 8), s.uniform_int(0, 5));
    const Strengths st{s.uniform(0.0, 3.6), s.uniform(0.0, 3.6)};

    HiddenState x = closed_form_edit(decompose(inst.h, inst.u, inst.p), st);
    if (opt.fault == Fault::PerturbEdit) x *= 1.0 + 1e-3;
    const HiddenState ref = oracle::qp_oracle(inst.h, inst.u, inst.p, st.lambda_n, st.lambda_p);

    const double gap = (x - ref).norm() / std::max(ref.norm(), 1e-300);
    const double residual = oracle::stationarity_residual(inst.h, x - inst.h, inst.u, inst.p,
                                                          st.lambda_n, st.lambda_p) /
                            inst.h.norm();
    const double l_star = oracle::qp_objective(inst.h, x - inst.h, inst.u, inst.p, st.lambda_n, st.lambda_p);
    const double l_zero = oracle::qp_objective(inst.h, Vector::Zero(d), inst.u, inst.p,
                                               st.lambda_n, st.lambda_p);
    const double increase = std::max(0.0, l_star - l_zero - 1e-12 * (1.0 + l_zero));
    rel.worst = std::max(rel.worst, gap);
    stat.worst = std::max(stat.worst, residual);
    obj.worst = std::max(obj.worst, increase);
    if (gap > rel.tolerance || residual > stat.tolerance || increase > 0.0) note_failure(res, seed);
  }
  res.trials = opt.trials;
  res.measures = {rel, stat, obj};
  return res;
}

/// Gated edits never lower VCR nor raise PCR, never grow the norm, and
/// strictly improve VCR in the non-degenerate case.
inline PropertyResult evidence_consistency(const Options& opt) {
  PropertyResult res;
  res.name = "evidence_consistency";
  Measure vcr_drop{"max VCR decrease", 0.0, 1e-10};
  Measure pcr_rise{"max PCR increase", 0.0, 1e-10};
  Measure growth{"max norm growth", 0.0, 1e-10};
  std::size_t eligible = 0;
  std::size_t strict = 0;
  std::size_t gated = 0;
  for (std::size_t i = 0; gated < opt.trials; ++i) {
    const auto seed = trial_seed(opt.seed, 2, i);
    detail::Sampler s(seed);
    const auto inst = random_instance(s, pick(s, {16, 32, 64}), s.uniform_int(1, 8),
                                      s.uniform_int(0, 5));
    EditConfig cfg;
    cfg.kappa = s.uniform(0.05, 1.5);
    cfg.lambda0 = s.uniform(0.05, 1.5);
    cfg.gamma_v = s.uniform(0.0, 1.0);
    cfg.gamma_p = s.uniform(0.0, 1.0);
    const auto out = edit_token(inst.h, inst.u, inst.p, cfg);
    if (!out.gated) continue;
    ++gated;

    const double dv = out.cert_before.vcr - out.cert_after.vcr;
    const double dp = out.cert_after.pcr - out.cert_before.pcr;
    const double dn = out.edited.norm() - inst.h.norm();
    vcr_drop.worst = std::max(vcr_drop.worst, dv);
    pcr_rise.worst = std::max(pcr_rise.worst, dp);
    growth.worst = std::max(growth.worst, dn);
    if (dv > 1e-10 || dp > 1e-10 || dn > 1e-10) note_failure(res, seed);

    const auto dec = decompose(inst.h, inst.u, inst.p);
    const double nonvisual = dec.prior.squaredNorm() + dec.residual.squaredNorm();
    if (out.strengths.lambda_n + out.strengths.lambda_p > 1e-9 && nonvisual > 1e-9 &&
        dec.visual.squaredNorm() > 1e-9) {
      ++eligible;
      if (out.cert_after.vcr > out.cert_before.vcr) {
        ++strict;
      } else {
        note_failure(res, seed);
      }
    }
  }
  res.trials = gated;
  res.measures = {vcr_drop, pcr_rise, growth};
  if (strict != eligible) {
    res.failures.push_back("strict VCR improvement in " + std::to_string(strict) + " of " +
                           std::to_string(eligible) + " eligible edits");
  }
  if (eligible == 0 && opt.trials > 0) res.failures.push_back("no eligible edit drawn");
  return res;
}

/// Dense projector algebra on estimator-produced bases, plus the per-edit
/// visual-subspace change.
inline PropertyResult non_interference(const Options& opt) {
  PropertyResult res;
  res.name = "non_interference";
  Measure audit{"projector audit worst defect", 0.0, 1e-8};
  Measure cross{"||U^T P||_max", 0.0, 1e-10};
  Measure delta_u{"||dh_U|| / max(1,||h||)", 0.0, 1e-8};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    const auto seed = trial_seed(opt.seed, 3, i);
    detail::Sampler s(seed);
    const Index d = pick(s, {16, 32, 64});
    auto inst = random_instance(s, d, s.uniform_int(1, 8), s.uniform_int(0, 5));
    OrthonormalBasis p = inst.p;
    if (opt.fault == Fault::LeakPriorIntoVisual && !p.is_empty() && !inst.u.is_empty()) {
      Matrix bad = p.columns();
      bad.col(0) = inst.u.columns().col(0);
      p = OrthonormalBasis::unchecked(std::move(bad), BasisKind::AntiPrior);
    }
    const auto a = oracle::projector_audit(inst.u, p);
    audit.worst = std::max(audit.worst, a.worst());
    const double c = cross_defect(inst.u, p);
    cross.worst = std::max(cross.worst, c);

    double du = 0.0;
    if (c <= kCrossTolerance) {
      EditConfig cfg;
      cfg.gamma_v = 1.0;  // edit whenever any non-visual energy exists
      const auto out = edit_token(inst.h, inst.u, p, cfg);
      du = out.delta_u_norm / std::max(1.0, inst.h.norm());
      delta_u.worst = std::max(delta_u.worst, du);
    }
    if (a.worst() > audit.tolerance || c > cross.tolerance || du > delta_u.tolerance) {
      note_failure(res, seed);
    }
  }
  res.trials = opt.trials;
  res.measures = {audit, cross, delta_u};
  return res;
}

/// With bases and strengths frozen, h -> U U^T h + a_P P P^T h + a_R Pi_R h
/// has Lipschitz constant at most 1.
inline PropertyResult frozen_contraction(const Options& opt) {
  PropertyResult res;
  res.name = "frozen_contraction";
  Measure ratio{"max ||T(h1)-T(h2)|| / ||h1-h2||", 0.0, 1.0 + 1e-10};
  constexpr std::size_t kPairsPerSetup = 100;
  std::size_t done = 0;
  for (std::size_t setup = 0; done < opt.trials; ++setup) {
    const auto seed = trial_seed(opt.seed, 4, setup);
    detail::Sampler s(seed);
    const Index d = pick(s, {16, 32, 64});
    const auto inst = random_instance(s, d, s.uniform_int(1, 8), s.uniform_int(0, 5));
    const Strengths st{s.uniform(0.0, 3.6), s.uniform(0.0, 3.6)};
    const auto map = [&](const HiddenState& h) {
      return closed_form_edit(decompose(h, inst.u, inst.p), st);
    };
    for (std::size_t k = 0; k < kPairsPerSetup && done < opt.trials; ++k, ++done) {
      const HiddenState h1 = s.gaussian(d) * s.uniform(0.01, 10.0);
      // Differences inside span(U) sit exactly on the Lipschitz bound.
      HiddenState h2;
      switch (k % 3) {
        case 0: h2 = h1 + 1e-3 * s.gaussian(d); break;
        case 1: h2 = s.gaussian(d) * s.uniform(0.01, 10.0); break;
        default: h2 = h1 + inst.u.project(s.gaussian(d)) + 1e-12 * s.gaussian(d); break;
      }
      const double gap = (h1 - h2).norm();
      if (gap == 0.0) continue;
      const double r = (map(h1) - map(h2)).norm() / gap;
      ratio.worst = std::max(ratio.worst, r);
      if (r > ratio.tolerance) note_failure(res, seed);
    }
  }
  res.trials = done;
  res.measures = {ratio};
  return res;
}

/// h = h_U + h_P + h_R with ||h||^2 = sum of component energies.
inline PropertyResult energy_identity(const Options& opt) {
  PropertyResult res;
  res.name = "energy_identity";
  Measure energy{"| ||h||^2 - sum ||h_*||^2 | / ||h||^2", 0.0, 1e-8};
  Measure recon{"||h_U+h_P+h_R-h|| / ||h||", 0.0, 1e-8};
  Measure inner{"max pairwise |<h_a,h_b>| / ||h||^2", 0.0, 1e-6};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    const auto seed = trial_seed(opt.seed, 5, i);
    detail::Sampler s(seed);
    const Index d = pick(s, {16, 32, 64});
    const auto inst = random_instance(s, d, s.uniform_int(1, 8), s.uniform_int(0, 5));
    const auto dec = decompose(inst.h, inst.u, inst.p);
    const double hh = inst.h.squaredNorm();
    const double scale2 = hh;  // random_instance never returns h = 0
    const double e = std::abs(hh - dec.visual.squaredNorm() - dec.prior.squaredNorm() -
                              dec.residual.squaredNorm()) / scale2;
    const double rc = (dec.visual + dec.prior + dec.residual - inst.h).norm() / std::sqrt(scale2);
    const double ip = std::max({std::abs(dec.visual.dot(dec.prior)),
                                std::abs(dec.visual.dot(dec.residual)),
                                std::abs(dec.prior.dot(dec.residual))}) / scale2;
    energy.worst = std::max(energy.worst, e);
    recon.worst = std::max(recon.worst, rc);
    inner.worst = std::max(inner.worst, ip);
    if (e > energy.tolerance || rc > recon.tolerance || ip > inner.tolerance) note_failure(res, seed);
  }
  res.trials = opt.trials;
  res.measures = {energy, recon, inner};
  return res;
}

/// visual_basis vs. dense eigendecomposition of V^T W V, on instances whose
/// relative spectral gap at r is at least 1e-4.
inline PropertyResult weighted_pca_agreement(const Options& opt) {
  PropertyResult res;
  res.name = "weighted_pca_agreement";
  Measure angle{"max principal angle (rad)", 0.0, 1e-5};
  std::size_t accepted = 0;
  for (std::size_t i = 0; accepted < opt.trials; ++i) {
    const auto seed = trial_seed(opt.seed, 6, i);
    detail::Sampler s(seed);
    const Index d = s.uniform_int(4, 48);
    const Index n_v = s.uniform_int(2, 40);
    const Index r = s.uniform_int(1, std::min<Index>(8, std::min(n_v, d) - 1));
    // Mixed column scales give a spread spectrum.
    Matrix rows = s.gaussian(n_v, d);
    for (Index j = 0; j < d; ++j) rows.col(j) *= std::exp(s.uniform(-1.5, 1.5));
    const VisualFeatureMatrix v(std::move(rows));
    const auto w = relevance_weights(v, s.gaussian(d), 1e-8);

    const Vector spectrum = oracle::weighted_covariance_spectrum(v, w);
    const double sr = std::sqrt(std::max(spectrum[r - 1], 0.0));
    const double sn = std::sqrt(std::max(spectrum[r], 0.0));
    if (!(sr > 0.0) || (sr - sn) / sr < 1e-4) continue;

    const auto fast = visual_basis(v, w, r);
    if (fast.flags().gap_degenerate) continue;
    ++accepted;
    const auto ref = oracle::brute_force_weighted_pca(v, w, r);
    const double a = oracle::max_principal_angle(ref.columns(), fast.columns());
    angle.worst = std::max(angle.worst, a);
    if (a > angle.tolerance) note_failure(res, seed);
  }
  res.trials = accepted;
  res.measures = {angle};
  return res;
}

using PropertyFn = PropertyResult (*)(const Options&);

inline std::vector<PropertyFn> suite_members(Suite suite) {
  std::vector<PropertyFn> props{evidence_consistency, non_interference, frozen_contraction,
                                energy_identity};
  std::vector<PropertyFn> oracles{closed_form_vs_oracle, weighted_pca_agreement};
  switch (suite) {
    case Suite::Props: return props;
    case Suite::Oracle: return oracles;
    case Suite::All: props.insert(props.end(), oracles.begin(), oracles.end()); return props;
  }
  return {};
}

inline std::vector<PropertyResult> run_suite(Suite suite, const Options& opt) {
  std::vector<PropertyResult> out;
  for (auto fn : suite_members(suite)) out.push_back(fn(opt));
  return out;
}

}  // namespace hedit::verify
