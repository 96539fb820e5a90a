#pragma once

// Replays a decode trace through the editor: maintains the caches,
// re-estimates the subspaces, edits every generated token and emits one
// record per edited token.

#include "hedit/cache.hpp"
#include "hedit/editor.hpp"
#include "hedit/trace.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hedit {

/// Trace and configuration disagree (e.g. hidden size).
class DataMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TokenReport {
  Index token_idx = 0;
  double vcr_before = 0.0;
  double pcr_before = 0.0;
  double vcr_after = 0.0;
  double pcr_after = 0.0;
  bool gated = false;
  double lambda_n = 0.0;
  double lambda_p = 0.0;
  double alpha_p = 1.0;
  double alpha_r = 1.0;
  double delta_u_norm = 0.0;
  double delta_p_norm = 0.0;
  double edit_micros = 0.0;
  // Not part of the CSV schema; emitted in JSON lines only.
  double estimate_micros = 0.0;
  Index visual_rank = 0;
  Index prior_rank = 0;
  double prior_norm = 0.0;  // ||h_P|| before the edit
};

struct RunSummary {
  std::size_t tokens = 0;
  double gate_rate = 0.0;
  double mean_delta_vcr = 0.0;
  double mean_delta_pcr = 0.0;
  double mean_delta_u = 0.0;
  double mean_delta_p = 0.0;
  double edit_tokens_per_sec = 0.0;
};

struct RunReport {
  std::vector<TokenReport> records;
  RunSummary summary;
};

inline RunSummary summarize(const std::vector<TokenReport>& records) {
  RunSummary s;
  s.tokens = records.size();
  if (records.empty()) return s;
  double gated = 0.0;
  double micros = 0.0;
  for (const auto& r : records) {
    gated += r.gated ? 1.0 : 0.0;
    s.mean_delta_vcr += r.vcr_after - r.vcr_before;
    s.mean_delta_pcr += r.pcr_after - r.pcr_before;
    s.mean_delta_u += r.delta_u_norm;
    s.mean_delta_p += r.delta_p_norm;
    micros += r.edit_micros;
  }
  const double n = static_cast<double>(records.size());
  s.gate_rate = gated / n;
  s.mean_delta_vcr /= n;
  s.mean_delta_pcr /= n;
  s.mean_delta_u /= n;
  s.mean_delta_p /= n;
  s.edit_tokens_per_sec = micros > 0.0 ? n / (micros * 1e-6) : 0.0;
  return s;
}

using RecordSink = std::function<void(const TokenReport&)>;

/// Replays `trace` under `cfg`, calling `sink` once per generated token in
/// order. Visual tokens never enter the text cache; prompt tokens do when the
/// header flag allows it; generated tokens always do, before their own edit.
inline void replay(const Trace& trace, const EditConfig& cfg, const RecordSink& sink) {
  cfg.validate();
  validate_trace(trace);
  const Index d = trace.dim();
  if (cfg.d != 0 && cfg.d != d) {
    throw DataMismatch("token 0: config expects d = " + std::to_string(cfg.d) +
                       ", trace has d = " + std::to_string(d));
  }
  using Clock = std::chrono::steady_clock;
  const auto micros_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
  };

  const VisualFeatureMatrix visual(trace.visual_matrix(), cfg.anchor_layer);
  TextCache text(cfg.window, d);
  OrthonormalBasis u = OrthonormalBasis::empty(d, BasisKind::Visual);
  Index generated = 0;

  for (Index t = 0; t < trace.token_count(); ++t) {
    const TokenKind kind = trace.kind(t);
    if (kind == TokenKind::Visual) continue;
    if (kind == TokenKind::Prompt) {
      if (trace.header.prompt_in_text_cache()) text.push(trace.anchor_state(t));
      continue;
    }
    text.push(trace.anchor_state(t));
    const HiddenState h = trace.edit_state(t);
    if (h.size() != d) throw DataMismatch("token " + std::to_string(t) + ": state length mismatch");

    const auto est0 = Clock::now();
    if (generated % cfg.stride == 0) {
      const auto w = relevance_weights(visual, h, cfg.eps_cert);
      u = visual_basis(visual, w, cfg.r);
    }
    const OrthonormalBasis p = anti_prior_basis(text.snapshot(), u, cfg.q);
    const double estimate_micros = micros_since(est0);

    const auto edit0 = Clock::now();
    const EditOutcome out = edit_token(h, u, p, cfg);
    const double edit_micros = micros_since(edit0);

    TokenReport rec;
    rec.token_idx = t;
    rec.vcr_before = out.cert_before.vcr;
    rec.pcr_before = out.cert_before.pcr;
    rec.vcr_after = out.cert_after.vcr;
    rec.pcr_after = out.cert_after.pcr;
    rec.gated = out.gated;
    rec.lambda_n = out.strengths.lambda_n;
    rec.lambda_p = out.strengths.lambda_p;
    rec.alpha_p = out.alpha_p;
    rec.alpha_r = out.alpha_r;
    rec.delta_u_norm = out.delta_u_norm;
    rec.delta_p_norm = out.delta_p_norm;
    rec.edit_micros = edit_micros;
    rec.estimate_micros = estimate_micros;
    rec.visual_rank = u.rank();
    rec.prior_rank = p.rank();
    rec.prior_norm = p.project(h).norm();
    sink(rec);
    ++generated;
  }
}

inline RunReport replay(const Trace& trace, const EditConfig& cfg) {
  RunReport report;
  replay(trace, cfg, [&](const TokenReport& r) { report.records.push_back(r); });
  report.summary = summarize(report.records);
  return report;
}

// ---------------------------------------------------------------------------
// Report streams. Each record is flushed as soon as it is written so that an
// interrupted run leaves a valid prefix.
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, JsonLines };

inline constexpr const char* kCsvHeader =
    "token_idx,vcr_before,pcr_before,vcr_after,pcr_after,gated,lambda_n,lambda_p,"
    "alpha_p,alpha_r,delta_u_norm,delta_p_norm,edit_micros";

class ReportWriter {
 public:
  ReportWriter(std::ostream& out, ReportFormat format) : out_(out), format_(format) {
    if (format_ == ReportFormat::Csv) out_ << kCsvHeader << '\n' << std::flush;
  }

  void write(const TokenReport& r) {
    char buf[768];
    if (format_ == ReportFormat::Csv) {
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                    static_cast<long long>(r.token_idx), r.vcr_before, r.pcr_before, r.vcr_after,
                    r.pcr_after, r.gated ? 1 : 0, r.lambda_n, r.lambda_p, r.alpha_p, r.alpha_r,
                    r.delta_u_norm, r.delta_p_norm, r.edit_micros);
    } else {
      std::snprintf(buf, sizeof buf,
                    "{\"token_idx\":%lld,\"vcr_before\":%.17g,\"pcr_before\":%.17g,"
                    "\"vcr_after\":%.17g,\"pcr_after\":%.17g,\"gated\":%s,\"lambda_n\":%.17g,"
                    "\"lambda_p\":%.17g,\"alpha_p\":%.17g,\"alpha_r\":%.17g,"
                    "\"delta_u_norm\":%.17g,\"delta_p_norm\":%.17g,\"edit_micros\":%.3f,"
                    "\"estimate_micros\":%.3f,\"visual_rank\":%lld,\"prior_rank\":%lld}\n",
                    static_cast<long long>(r.token_idx), r.vcr_before, r.pcr_before, r.vcr_after,
                    r.pcr_after, r.gated ? "true" : "false", r.lambda_n, r.lambda_p, r.alpha_p,
                    r.alpha_r, r.delta_u_norm, r.delta_p_norm, r.edit_micros, r.estimate_micros,
                    static_cast<long long>(r.visual_rank), static_cast<long long>(r.prior_rank));
    }
    out_ << buf << std::flush;
  }

 private:
  std::ostream& out_;
  ReportFormat format_;
};

}  // namespace hedit
