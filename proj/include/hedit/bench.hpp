#pragma once

// Scaling benchmark for the per-token path and the hyperparameter sweep.

#include "hedit/cache.hpp"
#include "hedit/config.hpp"
#include "hedit/editor.hpp"
#include "hedit/planted.hpp"
#include "hedit/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace hedit::bench {

struct ScalingOptions {
  std::vector<Index> dims{1024, 2048, 4096};
  Index r = 8;
  Index q = 5;
  Index n_v = 576;
  Index n_t = 512;
  Index tokens = 3;           // subspace estimations timed per d
  Index edit_reps = 2000;     // edit_token calls per timing batch
  Index edit_batches = 7;
  std::uint64_t seed = 1;
};

struct ScalingRow {
  Index d = 0;
  double edit_micros = 0.0;       // median per-token projection + edit
  double estimate_micros = 0.0;   // median per-token subspace estimation
  double visual_setup_millis = 0.0;  // once per image: V V^T
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  double edit_exponent = 0.0;
  double estimate_exponent = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

inline ScalingReport run_scaling(const ScalingOptions& opt) {
  using Clock = std::chrono::steady_clock;
  const auto micros_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  };
  ScalingReport report;
  for (Index d : opt.dims) {
    detail::Sampler s(opt.seed + static_cast<std::uint64_t>(d));
    ScalingRow row;
    row.d = d;

    Matrix raw = s.gaussian(opt.n_v, d);
    const auto setup0 = Clock::now();
    const VisualFeatureMatrix v(std::move(raw));
    row.visual_setup_millis = micros_since(setup0) * 1e-3;

    TextCache text(opt.n_t, d);
    for (Index i = 0; i < opt.n_t; ++i) text.push(s.gaussian(d));

    EditConfig cfg;
    cfg.r = opt.r;
    cfg.q = opt.q;
    cfg.gamma_v = 1.0;  // always take the edit branch

    std::vector<HiddenState> states;
    for (Index t = 0; t < std::max<Index>(opt.tokens, 1); ++t) states.push_back(s.gaussian(d));

    std::vector<double> est;
    OrthonormalBasis u = OrthonormalBasis::empty(d, BasisKind::Visual);
    OrthonormalBasis p = OrthonormalBasis::empty(d, BasisKind::AntiPrior);
    for (const auto& h : states) {
      const auto t0 = Clock::now();
      const auto w = relevance_weights(v, h, cfg.eps_cert);
      u = visual_basis(v, w, cfg.r);
      p = anti_prior_basis(text.snapshot(), u, cfg.q);
      est.push_back(micros_since(t0));
    }
    row.estimate_micros = median(est);

    std::vector<double> edit;
    volatile double sink = 0.0;
    for (Index b = 0; b < opt.edit_batches; ++b) {
      const auto t0 = Clock::now();
      for (Index k = 0; k < opt.edit_reps; ++k) {
        const auto out = edit_token(states[k % states.size()], u, p, cfg);
        sink = sink + out.edited[0];
      }
      edit.push_back(micros_since(t0) / static_cast<double>(opt.edit_reps));
    }
    row.edit_micros = median(edit);
    report.rows.push_back(row);
  }

  std::vector<double> x, ye, ys;
  for (const auto& r : report.rows) {
    x.push_back(static_cast<double>(r.d));
    ye.push_back(r.edit_micros);
    ys.push_back(r.estimate_micros);
  }
  report.edit_exponent = loglog_slope(x, ye);
  report.estimate_exponent = loglog_slope(x, ys);
  return report;
}

// ---------------------------------------------------------------------------
// Sensitivity sweep
// ---------------------------------------------------------------------------

enum class SweepParam { R, Q, Kappa };

inline SweepParam parse_sweep_param(std::string_view name) {
  if (name == "r") return SweepParam::R;
  if (name == "q") return SweepParam::Q;
  if (name == "kappa") return SweepParam::Kappa;
  throw ConfigError("unknown sweep parameter '" + std::string(name) + "' (expected r, q or kappa)");
}

inline const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::R: return "r";
    case SweepParam::Q: return "q";
    case SweepParam::Kappa: return "kappa";
  }
  return "?";
}

/// "a:b" (unit step), "a:b:step", "a,b,c" or a single value.
inline std::vector<double> parse_range(std::string_view text) {
  std::vector<double> out;
  if (detail::trim(text).empty()) throw ConfigError("empty range");
  auto number = [](std::string_view t) { return detail::parse_number<double>("range", detail::trim(t)); };
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
      const auto colon = text.find(':', start);
      parts.push_back(number(text.substr(start, colon - start)));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    if (parts.size() < 2 || parts.size() > 3) throw ConfigError("range must be a:b or a:b:step");
    const double lo = parts[0], hi = parts[1], step = parts.size() == 3 ? parts[2] : 1.0;
    if (!(step > 0.0)) throw ConfigError("range step must be > 0");
    if (hi < lo) throw ConfigError("empty range");
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
  } else {
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      out.push_back(number(text.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

struct SweepRow {
  double value = 0.0;
  RunSummary summary;
  double worst_vcr_drop = 0.0;  // max over gated tokens of vcr_before - vcr_after
  double worst_pcr_rise = 0.0;  // max over gated tokens of pcr_after - pcr_before
  bool monotone = true;
};

inline EditConfig with_param(EditConfig cfg, SweepParam param, double value) {
  switch (param) {
    case SweepParam::R: cfg.r = static_cast<Index>(std::llround(value)); break;
    case SweepParam::Q: cfg.q = static_cast<Index>(std::llround(value)); break;
    case SweepParam::Kappa: cfg.kappa = value; break;
  }
  cfg.validate();
  return cfg;
}

inline std::vector<SweepRow> run_sweep(const Trace& trace, const EditConfig& base, SweepParam param,
                                       const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("empty range");
  std::vector<SweepRow> rows;
  for (double value : values) {
    const auto report = replay(trace, with_param(base, param, value));
    SweepRow row;
    row.value = value;
    row.summary = report.summary;
    for (const auto& rec : report.records) {
      if (!rec.gated) continue;
      row.worst_vcr_drop = std::max(row.worst_vcr_drop, rec.vcr_before - rec.vcr_after);
      row.worst_pcr_rise = std::max(row.worst_pcr_rise, rec.pcr_after - rec.pcr_before);
    }
    row.monotone = row.worst_vcr_drop <= 1e-10 && row.worst_pcr_rise <= 1e-10;
    rows.push_back(row);
  }
  return rows;
}

/// (max - min) / |mean|; 0 for constant or empty input.
inline double relative_spread(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi == *lo) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return (*hi - *lo) / std::abs(mean);
}

}  // namespace hedit::bench
