// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "hedit/hedit.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

using namespace hedit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

template <class... Args>
std::string fmt(const char* format, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void add(std::string& detail, const std::string& part) {
  if (!detail.empty()) detail += "; ";
  detail += part;
}

// Folds a verify-suite result into an outcome, requiring the full trial count.
Outcome from_property(const verify::PropertyResult& r, std::size_t trials) {
  Outcome o;
  o.pass = r.passed() && r.trials >= trials;
  add(o.detail, fmt("%zu trials", r.trials));
  for (const auto& m : r.measures)
    add(o.detail, fmt("%s %.3g <= %.3g", m.label.c_str(), m.worst, m.tolerance));
  for (const auto& f : r.failures) add(o.detail, f);
  return o;
}

Outcome with_runtime(Outcome o, double secs, double limit) {
  add(o.detail, fmt("runtime %.1f s <= %.0f s", secs, limit));
  if (secs > limit) o.pass = false;
  return o;
}

// Traces used wherever a criterion says "every test trace".
std::vector<PlantSpec> trace_specs() {
  std::vector<PlantSpec> out;
  const double mixes[][3] = {{1.0, 0.0, 0.0}, {0.1, 0.9, 0.0}, {0.3, 0.5, 0.2},
                             {0.05, 0.45, 0.5}, {0.6, 0.3, 0.1}, {0.2, 0.2, 0.6}};
  std::uint64_t seed = 100;
  for (Index d : {32, 64, 128}) {
    for (const auto& m : mixes) {
      PlantSpec s;
      s.d = d;
      s.n_v = 24;
      s.n_tokens = 40;
      s.n_prompt = 6;
      s.r_true = 4;
      s.q_true = 4;
      s.visual_energy = m[0];
      s.prior_energy = m[1];
      s.residual_energy = m[2];
      s.noise_sigma = (seed % 2) ? 0.05 : 0.0;
      s.seed = seed++;
      out.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  verify::Options opt;
  opt.trials = 1000;
  const auto t0 = Clock::now();
  const auto r = verify::closed_form_vs_oracle(opt);
  return with_runtime(from_property(r, 1000), seconds_since(t0), 60.0);
}

Outcome criterion2() {
  verify::Options opt;
  opt.trials = 10000;
  const auto t0 = Clock::now();
  const auto r = verify::evidence_consistency(opt);
  return with_runtime(from_property(r, 10000), seconds_since(t0), 60.0);
}

Outcome criterion3() {
  verify::Options opt;
  opt.trials = 500;
  Outcome o = from_property(verify::non_interference(opt), 500);

  double worst = 0.0;
  std::size_t gated = 0;
  for (const auto& spec : trace_specs()) {
    const Trace t = gen_planted_trace(spec).trace;
    for (const auto& cfg : {EditConfig::defaults(), EditConfig::llava7b()}) {
      replay(t, cfg, [&](const TokenReport& rec) {
        if (!rec.gated) return;
        ++gated;
        const double scale = std::max(1.0, t.edit_state(rec.token_idx).norm());
        worst = std::max(worst, rec.delta_u_norm / scale);
      });
    }
  }
  add(o.detail, fmt("traces: %g gated edits, ||dh_U||/max(1,||h||) %.3g <= 1e-8",
         static_cast<double>(gated), worst));
  if (!(worst <= 1e-8) || gated == 0) o.pass = false;
  return o;
}

Outcome criterion4() {
  verify::Options opt;
  opt.trials = 10000;
  return from_property(verify::frozen_contraction(opt), 10000);
}

Outcome criterion5() {
  verify::Options opt;
  opt.trials = 10000;
  return from_property(verify::energy_identity(opt), 10000);
}

Outcome criterion6() {
  verify::Options opt;
  opt.trials = 500;
  return from_property(verify::weighted_pca_agreement(opt), 500);
}

Outcome criterion7() {
  PlantSpec spec;
  spec.d = 128;
  spec.n_v = 48;
  spec.n_tokens = 128;
  spec.n_prompt = 16;
  spec.r_true = 6;
  spec.q_true = 5;
  spec.visual_energy = 0.3;
  spec.prior_energy = 0.5;
  spec.residual_energy = 0.2;
  spec.seed = 7;
  const auto report = replay(gen_planted_trace(spec).trace, EditConfig::defaults());
  std::vector<double> du, dp;
  for (const auto& r : report.records) {
    if (!r.gated) continue;
    du.push_back(r.delta_u_norm);
    dp.push_back(r.delta_p_norm);
  }
  Outcome o;
  const double mu = bench::median(du), mp = bench::median(dp);
  const double ratio = mp > 0.0 ? mu / mp : std::numeric_limits<double>::infinity();
  add(o.detail, fmt("%g gated tokens; median ||dh_U|| %.3g, median ||dh_P|| %.3g",
         static_cast<double>(du.size()), mu, mp));
  add(o.detail, fmt("ratio %.3g <= 1e-4", ratio));
  o.pass = !du.empty() && ratio <= 1e-4;
  return o;
}

Outcome criterion8() {
  const auto t0 = Clock::now();
  const auto rep = bench::run_scaling(bench::ScalingOptions{});
  Outcome o;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    add(o.detail, fmt("d=%g edit %.1f us, estimate %.0f us", static_cast<double>(row.d),
           row.edit_micros, row.estimate_micros));
    if (i > 0) {
      const double growth = row.edit_micros / rep.rows[i - 1].edit_micros;
      add(o.detail, fmt("growth %.2fx <= 2.5x", growth));
      if (!(growth <= 2.5)) o.pass = false;
    }
  }
  add(o.detail, fmt("estimation exponent %.2f <= 1.3", rep.estimate_exponent));
  if (!(rep.estimate_exponent <= 1.3)) o.pass = false;
  return with_runtime(o, seconds_since(t0), 300.0);
}

// The fixed planted trace for the sensitivity grid: visual evidence is a
// minority of the state energy, so the gate and both strengths are active.
PlantSpec sensitivity_spec() {
  PlantSpec spec;
  spec.d = 256;
  spec.n_v = 64;
  spec.n_tokens = 96;
  spec.n_prompt = 16;
  spec.r_true = 6;
  spec.q_true = 6;
  spec.visual_energy = 0.1;
  spec.prior_energy = 0.5;
  spec.residual_energy = 0.4;
  spec.noise_sigma = 0.02;
  spec.seed = 2024;
  return spec;
}

Outcome criterion9() {
  const Trace t = gen_planted_trace(sensitivity_spec()).trace;
  std::vector<double> gate, dvcr;
  std::vector<double> axis_gate[3], axis_dvcr[3];
  for (Index r = 4; r <= 8; ++r) {
    for (Index q = 4; q <= 8; ++q) {
      for (int k = 0; k <= 5; ++k) {
        EditConfig cfg = EditConfig::llava7b();
        cfg.r = r;
        cfg.q = q;
        cfg.kappa = 0.3 + 0.1 * k;
        const auto s = replay(t, cfg).summary;
        gate.push_back(s.gate_rate);
        dvcr.push_back(s.mean_delta_vcr);
        // One-at-a-time slices through the (6, 6, 0.6) centre.
        if (q == 6 && k == 3) axis_gate[0].push_back(s.gate_rate), axis_dvcr[0].push_back(s.mean_delta_vcr);
        if (r == 6 && k == 3) axis_gate[1].push_back(s.gate_rate), axis_dvcr[1].push_back(s.mean_delta_vcr);
        if (r == 6 && q == 6) axis_gate[2].push_back(s.gate_rate), axis_dvcr[2].push_back(s.mean_delta_vcr);
      }
    }
  }
  Outcome o;
  const double sg = bench::relative_spread(gate), sv = bench::relative_spread(dvcr);
  add(o.detail, fmt("%g grid points; gate-rate spread %.3f <= 0.25, mean dVCR spread %.3f <= 0.25",
         static_cast<double>(gate.size()), sg, sv));
  const char* names[] = {"r", "q", "kappa"};
  for (int a = 0; a < 3; ++a) {
    add(o.detail, fmt("%s-only gate/dVCR spread %.3f / %.3f", names[a],
                      bench::relative_spread(axis_gate[a]), bench::relative_spread(axis_dvcr[a])));
  }
  o.pass = sg <= 0.25 && sv <= 0.25;
  return o;
}

Outcome criterion10() {
  Outcome o;
  std::size_t exact = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    detail::Sampler s(verify::trial_seed(10, 0, i));
    Trace t;
    t.header.d = static_cast<std::uint32_t>(s.uniform_int(1, 24));
    t.header.n_v = static_cast<std::uint32_t>(s.uniform_int(1, 12));
    t.header.n_tokens = static_cast<std::uint32_t>(s.uniform_int(1, 20));
    t.header.flags = s.coin(0.5) ? kFlagPromptInTextCache : 0u;
    // Raw bit patterns, excluding NaN/Inf, so every float class round-trips.
    auto draw = [&] {
      for (;;) {
        const auto bits = static_cast<std::uint32_t>(s.uniform_int(0, 0xffffffffLL));
        const float f = std::bit_cast<float>(bits);
        if (std::isfinite(f)) return f;
      }
    };
    for (std::uint32_t k = 0; k < t.header.n_v * t.header.d; ++k) t.body.visual.push_back(draw());
    for (std::uint32_t k = 0; k < t.header.n_tokens * t.header.d; ++k) {
      t.body.edit_states.push_back(draw());
      t.body.anchor_states.push_back(draw());
    }
    for (std::uint32_t k = 0; k < t.header.n_tokens; ++k)
      t.body.kinds.push_back(static_cast<TokenKind>(s.uniform_int(0, 2)));

    const auto path = std::filesystem::temp_directory_path() / "hedit_acceptance.hedt";
    write_trace(path, t);
    const Trace back = read_trace(path);
    const bool same = back.header == t.header &&
                      std::memcmp(back.body.visual.data(), t.body.visual.data(), 4 * t.body.visual.size()) == 0 &&
                      std::memcmp(back.body.edit_states.data(), t.body.edit_states.data(), 4 * t.body.edit_states.size()) == 0 &&
                      std::memcmp(back.body.anchor_states.data(), t.body.anchor_states.data(), 4 * t.body.anchor_states.size()) == 0 &&
                      back.body.kinds == t.body.kinds && encode_trace(back) == encode_trace(t);
    exact += same ? 1 : 0;
    std::filesystem::remove(path);
  }
  add(o.detail, fmt("%g/1000 bit-exact round-trips", static_cast<double>(exact)));
  if (exact != 1000) o.pass = false;

  // Malformed inputs and their designated codes.
  PlantSpec spec;
  spec.d = 8;
  spec.n_v = 3;
  spec.n_tokens = 4;
  spec.r_true = 2;
  spec.q_true = 2;
  const auto good = encode_trace(gen_planted_trace(spec).trace);
  auto set_u32 = [](std::vector<unsigned char> b, std::size_t off, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b[off + k] = static_cast<unsigned char>(v >> (8 * k));
    return b;
  };
  auto with = [&](const std::function<void(std::vector<unsigned char>&)>& f) {
    auto b = good;
    f(b);
    return b;
  };
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  struct Case {
    const char* name;
    std::vector<unsigned char> bytes;
    TraceErrc want;
  };
  const std::vector<Case> cases{
      {"bad magic", with([](auto& b) { b[3] = 'X'; }), TraceErrc::bad_magic},
      {"short header", {good.begin(), good.begin() + 23}, TraceErrc::truncated},
      {"version 2", set_u32(good, 4, 2), TraceErrc::version_mismatch},
      {"d = 0", set_u32(good, 8, 0), TraceErrc::invalid_header},
      {"n_v = 0", set_u32(good, 12, 0), TraceErrc::invalid_header},
      {"n_tokens = 0", set_u32(good, 16, 0), TraceErrc::invalid_header},
      {"body short by 1 byte", {good.begin(), good.end() - 1}, TraceErrc::truncated},
      {"trailing byte", with([](auto& b) { b.push_back(0); }), TraceErrc::trailing_bytes},
      {"NaN in visual block", with([&](auto& b) { std::memcpy(b.data() + 24, &nan, 4); }), TraceErrc::non_finite},
      {"Inf in token block", with([&](auto& b) { std::memcpy(b.data() + 24 + 4 * 24, &inf, 4); }), TraceErrc::non_finite},
      {"token kind 9", with([](auto& b) { b.back() = 9; }), TraceErrc::bad_token_kind},
  };
  std::size_t ok = 0;
  for (const auto& c : cases) {
    TraceErrc got{};
    bool threw = false;
    try {
      decode_trace(c.bytes);
    } catch (const TraceError& e) {
      threw = true;
      got = e.code();
    }
    if (threw && got == c.want) {
      ++ok;
    } else {
      o.pass = false;
      o.detail += std::string("; ") + c.name + " -> " + (threw ? to_string(got) : "accepted");
    }
  }
  try {
    read_trace(std::filesystem::temp_directory_path() / "hedit_acceptance_missing.hedt");
  } catch (const TraceError& e) {
    if (e.code() == TraceErrc::io_error) ++ok; else o.pass = false;
  }
  add(o.detail, fmt("%g/%g malformed cases mapped to their codes", static_cast<double>(ok),
         static_cast<double>(cases.size() + 1)));
  if (ok != cases.size() + 1) o.pass = false;
  return o;
}

}  // namespace

// With no argument every criterion runs; "N" runs criterion N only.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"closed-form optimality", criterion1},
      {"evidence consistency", criterion2},
      {"non-interference", criterion3},
      {"frozen-coefficient contraction", criterion4},
      {"energy identity", criterion5},
      {"weighted-PCA agreement", criterion6},
      {"visual/prior edit separation", criterion7},
      {"per-token scaling", criterion8},
      {"hyperparameter sensitivity", criterion9},
      {"trace format", criterion10},
  };
  std::size_t first = 0, last = criteria.size();
  if (argc > 1) {
    const long n = std::strtol(argv[1], nullptr, 10);
    if (n < 1 || n > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu]\n", argv[0], criteria.size());
      return 2;
    }
    first = static_cast<std::size_t>(n - 1);
    last = first + 1;
  }
  int failed = 0;
  for (std::size_t i = first; i < last; ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, last - first);
  return failed == 0 ? 0 : 1;
}
