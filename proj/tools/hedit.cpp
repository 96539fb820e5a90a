// hedit: generate synthetic decode traces, replay them through the
// subspace editor, and run the verification / benchmark / sweep harnesses.
//
// Exit codes: 0 success, 1 property failure, 2 invalid input, 3 data mismatch.

#include "hedit/hedit.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitMismatch = 3;

hedit::EditConfig load_config(const std::string& preset, const std::string& path) {
  hedit::EditConfig base;
  if (preset == "llava7b") {
    base = hedit::EditConfig::llava7b();
  } else if (preset == "default") {
    base = hedit::EditConfig::defaults();
  } else {
    throw hedit::ConfigError("unknown preset '" + preset + "' (expected default or llava7b)");
  }
  return path.empty() ? base : hedit::load_edit_config(path, base);
}

std::filesystem::path sidecar_path(const std::filesystem::path& trace) {
  auto p = trace;
  p += ".hedg";
  return p;
}

int cmd_gen(const std::string& spec_path, const std::string& out_path) {
  const auto spec = hedit::load_plant_spec(spec_path);
  std::cout << hedit::format_plant_spec(spec);
  const auto planted = hedit::gen_planted_trace(spec);
  hedit::write_trace(out_path, planted.trace);
  hedit::write_ground_truth(sidecar_path(out_path), planted.truth);
  std::cout << "wrote " << out_path << " (" << std::filesystem::file_size(out_path) << " bytes), "
            << sidecar_path(out_path).string() << "\n";
  return kExitOk;
}

void print_summary(std::ostream& os, const hedit::RunSummary& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "tokens=%zu gate_rate=%.4f mean_dvcr=%.6g mean_dpcr=%.6g mean_dh_u=%.3g "
                "mean_dh_p=%.6g edit_tps=%.1f\n",
                s.tokens, s.gate_rate, s.mean_delta_vcr, s.mean_delta_pcr, s.mean_delta_u,
                s.mean_delta_p, s.edit_tokens_per_sec);
  os << buf;
}

int cmd_run(const std::string& trace_path, const std::string& preset,
            const std::string& config_path, const std::string& out_path,
            const std::string& format_name) {
  hedit::ReportFormat format;
  if (format_name == "csv") {
    format = hedit::ReportFormat::Csv;
  } else if (format_name == "json-lines" || format_name == "jsonl") {
    format = hedit::ReportFormat::JsonLines;
  } else {
    std::cerr << "error: unknown format '" << format_name << "'\n";
    return kExitInvalid;
  }
  const auto cfg = load_config(preset, config_path);
  const auto trace = hedit::read_trace(trace_path);

  std::unique_ptr<std::ofstream> file;
  if (!out_path.empty()) {
    file = std::make_unique<std::ofstream>(out_path, std::ios::trunc);
    if (!*file) throw hedit::ConfigError("cannot create " + out_path);
  }
  std::ostream& out = file ? static_cast<std::ostream&>(*file) : std::cout;
  hedit::ReportWriter writer(out, format);
  std::vector<hedit::TokenReport> records;
  hedit::replay(trace, cfg, [&](const hedit::TokenReport& r) {
    writer.write(r);
    records.push_back(r);
  });
  print_summary(file ? std::cout : std::cerr, hedit::summarize(records));
  return kExitOk;
}

int cmd_verify(const std::string& suite_name, std::size_t trials, std::uint64_t seed,
               const std::string& fault_name) {
  using namespace hedit::verify;
  Suite suite;
  if (suite_name == "props") {
    suite = Suite::Props;
  } else if (suite_name == "oracle") {
    suite = Suite::Oracle;
  } else if (suite_name == "all") {
    suite = Suite::All;
  } else {
    std::cerr << "error: unknown suite '" << suite_name << "'\n";
    return kExitInvalid;
  }
  if (trials == 0) {
    std::cerr << "error: --trials must be >= 1\n";
    return kExitInvalid;
  }
  Options opt{trials, seed, Fault::None};
  if (fault_name == "leak") {
    opt.fault = Fault::LeakPriorIntoVisual;
  } else if (fault_name == "perturb") {
    opt.fault = Fault::PerturbEdit;
  } else if (fault_name != "none") {
    std::cerr << "error: unknown fault '" << fault_name << "'\n";
    return kExitInvalid;
  }

  bool all_ok = true;
  for (const auto& res : run_suite(suite, opt)) {
    const bool ok = res.passed();
    all_ok = all_ok && ok;
    std::printf("%-4s %-24s trials=%zu\n", ok ? "PASS" : "FAIL", res.name.c_str(), res.trials);
    for (const auto& m : res.measures) {
      std::printf("       %-48s worst=%.12g tol=%.12g%s\n", m.label.c_str(), m.worst, m.tolerance,
                  m.ok() ? "" : "  <-- violated");
    }
    for (const auto& f : res.failures) std::printf("       %s\n", f.c_str());
    if (!ok && res.failed_seed_known) {
      std::printf("       first failing trial seed: %llu\n",
                  static_cast<unsigned long long>(res.failing_seed));
    }
  }
  return all_ok ? kExitOk : kExitPropertyFailure;
}

int cmd_bench(const std::vector<long long>& dims, long long r, long long q, long long n_v,
              long long n_t, long long tokens, long long reps) {
  if (dims.empty()) {
    std::cerr << "error: --dims is empty\n";
    return kExitInvalid;
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] < 1 || (i > 0 && dims[i] <= dims[i - 1])) {
      std::cerr << "error: --dims must be positive and strictly ascending\n";
      return kExitInvalid;
    }
  }
  if (r < 1 || q < 0 || n_v < 1 || n_t < 0 || tokens < 1 || reps < 1) {
    std::cerr << "error: r, n_v, tokens and reps must be >= 1; q, n_t >= 0\n";
    return kExitInvalid;
  }
  hedit::bench::ScalingOptions opt;
  opt.dims.assign(dims.begin(), dims.end());
  opt.r = r;
  opt.q = q;
  opt.n_v = n_v;
  opt.n_t = std::max<long long>(n_t, 1);
  opt.tokens = tokens;
  opt.edit_reps = reps;
  const auto rep = hedit::bench::run_scaling(opt);

  std::printf("r=%lld q=%lld n_v=%lld n_t=%lld\n", r, q, n_v, n_t);
  std::printf("%8s %16s %16s %18s\n", "d", "edit_us/token", "estimate_us", "visual_setup_ms");
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    std::printf("%8lld %16.3f %16.1f %18.2f", static_cast<long long>(row.d), row.edit_micros,
                row.estimate_micros, row.visual_setup_millis);
    if (i > 0) std::printf("   edit x%.2f", row.edit_micros / rep.rows[i - 1].edit_micros);
    std::printf("\n");
  }
  std::printf("log-log exponent: edit path %.3f, subspace estimation %.3f\n", rep.edit_exponent,
              rep.estimate_exponent);
  return kExitOk;
}

int cmd_sweep(const std::string& param_name, const std::string& range_text,
              const std::string& trace_path, const std::string& preset,
              const std::string& config_path, const std::string& out_path) {
  const auto param = hedit::bench::parse_sweep_param(param_name);
  const auto values = hedit::bench::parse_range(range_text);
  const auto cfg = load_config(preset, config_path);
  const auto trace = hedit::read_trace(trace_path);
  const auto rows = hedit::bench::run_sweep(trace, cfg, param, values);

  std::unique_ptr<std::ofstream> file;
  if (!out_path.empty()) {
    file = std::make_unique<std::ofstream>(out_path, std::ios::trunc);
    if (!*file) throw hedit::ConfigError("cannot create " + out_path);
  }
  std::ostream& out = file ? static_cast<std::ostream&>(*file) : std::cout;
  out << "param,value,gate_rate,mean_delta_vcr,mean_delta_pcr,mean_delta_u,mean_delta_p,monotone\n";
  for (const auto& row : rows) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  hedit::bench::to_string(param), row.value, row.summary.gate_rate,
                  row.summary.mean_delta_vcr, row.summary.mean_delta_pcr, row.summary.mean_delta_u,
                  row.summary.mean_delta_p, row.monotone ? 1 : 0);
    out << buf << std::flush;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certificate-gated orthogonal subspace editing of decoder hidden states"};
  app.require_subcommand(1);

  std::string spec_path, out_path, trace_path, config_path, preset = "llava7b", format = "csv";
  auto* gen = app.add_subcommand("gen", "Generate a planted synthetic trace and its ground-truth sidecar");
  gen->add_option("--spec,spec", spec_path, "Plant spec (key = value)")->required();
  gen->add_option("--out", out_path, "Output trace path; sidecar is written to <out>.hedg")->required();

  auto* run = app.add_subcommand("run", "Replay a trace through the editor and write a per-token report");
  run->add_option("--trace", trace_path, "Trace file (HEDT)")->required();
  run->add_option("--config", config_path, "EditConfig overrides (key = value)");
  run->add_option("--preset", preset, "Base configuration: llava7b or default")->capture_default_str();
  run->add_option("--out", out_path, "Report path (stdout when omitted)");
  run->add_option("--format", format, "csv or json-lines")->capture_default_str();

  std::string suite = "all", fault = "none";
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  auto* verify = app.add_subcommand("verify", "Run the randomised property suites");
  verify->add_option("--suite,suite", suite, "props, oracle or all")->capture_default_str();
  verify->add_option("--trials", trials, "Trials per property")->capture_default_str();
  verify->add_option("--seed", seed, "Base seed")->capture_default_str();
  verify->add_option("--inject-fault", fault, "Harness self-test: none, leak or perturb")
      ->capture_default_str();

  std::vector<long long> dims;
  long long r = 8, q = 5, n_v = 576, n_t = 512, tokens = 3, reps = 2000;
  auto* bench = app.add_subcommand("bench", "Per-token cost scaling in the hidden size d");
  bench->add_option("--dims", dims, "Ascending hidden sizes, e.g. 1024,2048,4096")
      ->delimiter(',');
  bench->add_option("--r", r, "Evidence rank")->capture_default_str();
  bench->add_option("--q", q, "Prior rank")->capture_default_str();
  bench->add_option("--nv", n_v, "Visual tokens")->capture_default_str();
  bench->add_option("--nt", n_t, "Text-cache rows")->capture_default_str();
  bench->add_option("--tokens", tokens, "Subspace estimations timed per d")->capture_default_str();
  bench->add_option("--reps", reps, "edit_token calls per timing batch")->capture_default_str();

  std::string param, range;
  auto* sweep = app.add_subcommand("sweep", "Replay a trace over a grid of r, q or kappa");
  sweep->add_option("--param", param, "r, q or kappa")->required();
  sweep->add_option("--range", range, "a:b, a:b:step or a,b,c")->required();
  sweep->add_option("--trace", trace_path, "Trace file (HEDT)")->required();
  sweep->add_option("--config", config_path, "EditConfig overrides (key = value)");
  sweep->add_option("--preset", preset, "Base configuration: llava7b or default")->capture_default_str();
  sweep->add_option("--out", out_path, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*gen) return cmd_gen(spec_path, out_path);
    if (*run) return cmd_run(trace_path, preset, config_path, out_path, format);
    if (*verify) return cmd_verify(suite, trials, seed, fault);
    if (*bench) return cmd_bench(dims, r, q, n_v, n_t, tokens, reps);
    if (*sweep) return cmd_sweep(param, range, trace_path, preset, config_path, out_path);
  } catch (const hedit::DataMismatch& e) {
    std::cerr << "data mismatch: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const hedit::TraceError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const hedit::ConfigError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const hedit::ContractViolation& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
