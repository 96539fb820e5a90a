#pragma once

// Flat "key = value" config documents for EditConfig and PlantSpec.
// '#' starts a comment; blank lines are ignored; unknown keys are errors.

#include "hedit/editor.hpp"
#include "hedit/planted.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace hedit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("bad boolean for '" + std::string(key) + "': '" + std::string(text) + "'");
}

using Setter = std::function<void(std::string_view key, std::string_view value)>;

inline void apply_document(std::istream& in, const std::map<std::string, Setter, std::less<>>& keys) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
    }
    it->second(key, value);
  }
}

inline std::ifstream open_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

}  // namespace detail

/// Applies the document on top of `base` and validates the result.
inline EditConfig parse_edit_config(std::istream& in, EditConfig base = EditConfig::defaults()) {
  using detail::parse_number;
  EditConfig& c = base;
  const std::map<std::string, detail::Setter, std::less<>> keys{
      {"r", [&](auto k, auto v) { c.r = parse_number<Index>(k, v); }},
      {"q", [&](auto k, auto v) { c.q = parse_number<Index>(k, v); }},
      {"kappa", [&](auto k, auto v) { c.kappa = parse_number<double>(k, v); }},
      {"lambda0", [&](auto k, auto v) { c.lambda0 = parse_number<double>(k, v); }},
      {"lambda_max", [&](auto k, auto v) { c.lambda_max = parse_number<double>(k, v); }},
      {"eps_cert", [&](auto k, auto v) { c.eps_cert = parse_number<double>(k, v); }},
      {"gamma_v", [&](auto k, auto v) { c.gamma_v = parse_number<double>(k, v); }},
      {"gamma_p", [&](auto k, auto v) { c.gamma_p = parse_number<double>(k, v); }},
      {"window", [&](auto k, auto v) { c.window = parse_number<Index>(k, v); }},
      {"stride", [&](auto k, auto v) { c.stride = parse_number<Index>(k, v); }},
      {"anchor_layer", [&](auto k, auto v) { c.anchor_layer = parse_number<int>(k, v); }},
      {"d", [&](auto k, auto v) { c.d = parse_number<Index>(k, v); }},
  };
  detail::apply_document(in, keys);
  if (auto err = c.validation_error(); !err.empty()) throw ConfigError(err);
  return c;
}

inline EditConfig parse_edit_config(const std::string& text, EditConfig base = EditConfig::defaults()) {
  std::istringstream in(text);
  return parse_edit_config(in, base);
}

inline EditConfig load_edit_config(const std::filesystem::path& path,
                                   EditConfig base = EditConfig::defaults()) {
  auto in = detail::open_config(path);
  return parse_edit_config(in, base);
}

/// Parses and validates a plant spec.
inline PlantSpec parse_plant_spec(std::istream& in) {
  using detail::parse_number;
  PlantSpec s;
  const std::map<std::string, detail::Setter, std::less<>> keys{
      {"d", [&](auto k, auto v) { s.d = parse_number<Index>(k, v); }},
      {"n_v", [&](auto k, auto v) { s.n_v = parse_number<Index>(k, v); }},
      {"n_tokens", [&](auto k, auto v) { s.n_tokens = parse_number<Index>(k, v); }},
      {"n_prompt", [&](auto k, auto v) { s.n_prompt = parse_number<Index>(k, v); }},
      {"r_true", [&](auto k, auto v) { s.r_true = parse_number<Index>(k, v); }},
      {"q_true", [&](auto k, auto v) { s.q_true = parse_number<Index>(k, v); }},
      {"visual_energy", [&](auto k, auto v) { s.visual_energy = parse_number<double>(k, v); }},
      {"prior_energy", [&](auto k, auto v) { s.prior_energy = parse_number<double>(k, v); }},
      {"residual_energy", [&](auto k, auto v) { s.residual_energy = parse_number<double>(k, v); }},
      {"noise_sigma", [&](auto k, auto v) { s.noise_sigma = parse_number<double>(k, v); }},
      {"prompt_in_cache", [&](auto k, auto v) { s.prompt_in_cache = detail::parse_bool(k, v); }},
      {"seed", [&](auto k, auto v) { s.seed = parse_number<std::uint64_t>(k, v); }},
  };
  detail::apply_document(in, keys);
  if (auto err = s.validation_error(); !err.empty()) throw ConfigError(err);
  return s;
}

inline PlantSpec parse_plant_spec(const std::string& text) {
  std::istringstream in(text);
  return parse_plant_spec(in);
}

inline PlantSpec load_plant_spec(const std::filesystem::path& path) {
  auto in = detail::open_config(path);
  return parse_plant_spec(in);
}

/// Writes a plant spec back in the same format (used for the `gen` echo).
inline std::string format_plant_spec(const PlantSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "d = " << s.d << "\nn_v = " << s.n_v << "\nn_tokens = " << s.n_tokens
     << "\nn_prompt = " << s.n_prompt << "\nr_true = " << s.r_true << "\nq_true = " << s.q_true
     << "\nvisual_energy = " << s.visual_energy << "\nprior_energy = " << s.prior_energy
     << "\nresidual_energy = " << s.residual_energy << "\nnoise_sigma = " << s.noise_sigma
     << "\nprompt_in_cache = " << (s.prompt_in_cache ? 1 : 0) << "\nseed = " << s.seed << "\n";
  return os.str();
}

}  // namespace hedit
