#include "hedit/oracle.hpp"
#include "hedit/planted.hpp"
#include "hedit/replay.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace hedit;

namespace {

PlantSpec base_spec() {
  PlantSpec spec;
  spec.d = 64;
  spec.n_v = 32;
  spec.n_tokens = 48;
  spec.r_true = 4;
  spec.q_true = 4;
  spec.seed = 17;
  return spec;
}

}  // namespace

TEST(Replay, VisualOnlyTraceHasHighVcrAndNoEdits) {
  const auto t = gen_planted_trace(base_spec()).trace;
  const auto report = replay(t, EditConfig::llava7b());
  ASSERT_EQ(report.records.size(), 48u);
  for (const auto& r : report.records) {
    EXPECT_GE(r.vcr_before, 0.95);
    EXPECT_FALSE(r.gated);
  }
  EXPECT_EQ(report.summary.gate_rate, 0.0);
}

TEST(Replay, PriorDominatedTraceGatesEveryToken) {
  auto spec = base_spec();
  spec.visual_energy = 0.1;
  spec.prior_energy = 0.9;
  const auto report = replay(gen_planted_trace(spec).trace, EditConfig::llava7b());
  for (const auto& r : report.records) {
    EXPECT_TRUE(r.gated) << r.token_idx;
    EXPECT_GE(r.vcr_after, r.vcr_before - 1e-10);
    EXPECT_LE(r.pcr_after, r.pcr_before + 1e-10);
    EXPECT_LE(r.delta_u_norm, 1e-8);
    EXPECT_NEAR(r.delta_p_norm, (1.0 - r.alpha_p) * r.prior_norm, 1e-10);
  }
  EXPECT_EQ(report.summary.gate_rate, 1.0);
}

TEST(Replay, OneRecordPerGeneratedToken) {
  auto spec = base_spec();
  spec.n_prompt = 9;
  spec.prior_energy = 0.3;
  const auto report = replay(gen_planted_trace(spec).trace, EditConfig::llava7b());
  ASSERT_EQ(report.records.size(), 48u);
  EXPECT_EQ(report.records.front().token_idx, 9);
  EXPECT_EQ(report.records.back().token_idx, 56);
}

TEST(Replay, VisualTokensAreSkippedAndNeverCached) {
  auto t = gen_planted_trace(base_spec()).trace;
  t.body.kinds[0] = TokenKind::Visual;
  t.body.kinds[1] = TokenKind::Visual;
  const auto report = replay(t, EditConfig::llava7b());
  EXPECT_EQ(report.records.size(), 46u);
  EXPECT_EQ(report.records.front().token_idx, 2);
}

TEST(Replay, ZeroAnchorsGiveEmptyPriorBasis) {
  auto t = gen_planted_trace(base_spec()).trace;
  std::fill(t.body.anchor_states.begin(), t.body.anchor_states.end(), 0.0f);
  const auto report = replay(t, EditConfig::llava7b());
  for (const auto& r : report.records) {
    EXPECT_EQ(r.prior_rank, 0);
    EXPECT_EQ(r.pcr_before, 0.0);
  }
}

TEST(Replay, PromptFlagControlsTextCache) {
  // With prompts excluded the first generated token sees a one-row cache.
  auto spec = base_spec();
  spec.n_prompt = 10;
  spec.prior_energy = 0.5;
  spec.prompt_in_cache = false;
  const auto off = replay(gen_planted_trace(spec).trace, EditConfig::llava7b());
  spec.prompt_in_cache = true;
  const auto on = replay(gen_planted_trace(spec).trace, EditConfig::llava7b());
  EXPECT_EQ(off.records.front().prior_rank, 1);
  EXPECT_EQ(on.records.front().prior_rank, 5);  // q, once the cache has enough rows
}

TEST(Replay, DeterministicApartFromTimings) {
  auto spec = base_spec();
  spec.prior_energy = 0.6;
  spec.residual_energy = 0.3;
  const auto t = gen_planted_trace(spec).trace;
  const auto a = replay(t, EditConfig::llava7b());
  const auto b = replay(t, EditConfig::llava7b());
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].vcr_after, b.records[i].vcr_after);
    EXPECT_EQ(a.records[i].pcr_after, b.records[i].pcr_after);
    EXPECT_EQ(a.records[i].delta_p_norm, b.records[i].delta_p_norm);
  }
}

TEST(Replay, RecoversPlantedSubspaces) {
  auto spec = base_spec();
  spec.prior_energy = 0.5;
  spec.residual_energy = 0.2;
  spec.n_tokens = 200;
  const auto planted = gen_planted_trace(spec);
  const auto& t = planted.trace;
  EditConfig cfg = EditConfig::llava7b();
  cfg.r = spec.r_true;
  cfg.q = spec.q_true;
  const VisualFeatureMatrix v(t.visual_matrix());
  TextCache text(cfg.window, t.dim());
  for (Index i = 0; i < t.token_count(); ++i) text.push(t.anchor_state(i));
  const auto u = visual_basis(v, relevance_weights(v, t.edit_state(0), cfg.eps_cert), cfg.r);
  const auto p = anti_prior_basis(text.snapshot(), u, cfg.q);
  EXPECT_LE(oracle::max_principal_angle(planted.truth.visual, u.columns()), 0.05);
  EXPECT_LE(oracle::max_principal_angle(planted.truth.prior, p.columns()), 0.05);
}

TEST(Replay, EmptyVisualPlantStillReplays) {
  auto t = gen_planted_trace(base_spec()).trace;
  std::fill(t.body.visual.begin(), t.body.visual.end(), 0.0f);
  const auto report = replay(t, EditConfig::llava7b());
  for (const auto& r : report.records) {
    EXPECT_EQ(r.visual_rank, 0);
    EXPECT_EQ(r.vcr_before, 0.0);
    EXPECT_TRUE(r.gated);
  }
}

TEST(Replay, DimensionMismatchNamesFirstToken) {
  const auto t = gen_planted_trace(base_spec()).trace;
  EditConfig cfg;
  cfg.d = 32;
  try {
    replay(t, cfg);
    FAIL();
  } catch (const DataMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("token 0"), std::string::npos);
  }
}

TEST(Replay, StrideReusesVisualBasis) {
  auto spec = base_spec();
  spec.prior_energy = 0.4;
  const auto t = gen_planted_trace(spec).trace;
  EditConfig cfg = EditConfig::llava7b();
  cfg.stride = 1000;
  const auto report = replay(t, cfg);
  EXPECT_EQ(report.records.size(), 48u);
  for (const auto& r : report.records) EXPECT_LE(r.delta_u_norm, 1e-8);
}

TEST(ReportWriter, CsvHeaderAndRowShape) {
  std::ostringstream out;
  ReportWriter w(out, ReportFormat::Csv);
  TokenReport r;
  r.token_idx = 3;
  r.gated = true;
  w.write(r);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind(kCsvHeader, 0), 0u);
  const auto second = s.substr(s.find('\n') + 1);
  EXPECT_EQ(std::count(second.begin(), second.end(), ','), 12);
  EXPECT_EQ(second.rfind("3,", 0), 0u);
}

TEST(ReportWriter, JsonLinesOnePerRecord) {
  std::ostringstream out;
  ReportWriter w(out, ReportFormat::JsonLines);
  w.write(TokenReport{});
  w.write(TokenReport{});
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
  EXPECT_NE(s.find("\"gated\":false"), std::string::npos);
}

TEST(Summary, AveragesOverRecords) {
  std::vector<TokenReport> recs(4);
  recs[0].gated = recs[1].gated = true;
  recs[0].vcr_after = 0.4;
  recs[1].delta_p_norm = 2.0;
  const auto s = summarize(recs);
  EXPECT_EQ(s.tokens, 4u);
  EXPECT_DOUBLE_EQ(s.gate_rate, 0.5);
  EXPECT_DOUBLE_EQ(s.mean_delta_vcr, 0.1);
  EXPECT_DOUBLE_EQ(s.mean_delta_p, 0.5);
}
