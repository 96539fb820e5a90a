#pragma once

// Binary decode-trace format ("HEDT") and the ground-truth sidecar ("HEDG").
//
// HEDT layout, all integers u32 little-endian, floats IEEE-754 binary32 LE:
//
//   magic "HEDT" | version = 1 | d | n_v | n_tokens | flags
//   visual:  n_v * d floats, row-major (anchor-layer visual features)
//   tokens:  n_tokens records of
//              edit_state   d floats  (edit-layer state)
//              anchor_state d floats  (anchor-layer state, text-cache input)
//              kind         u8        (0 generated text, 1 visual, 2 prompt text)
//
// flags bit 0: prompt tokens enter the text cache.
//
// HEDG layout:
//
//   magic "HEDG" | version = 1 | d | r | q
//   U: d * r floats, row-major;  P: d * q floats, row-major

#include "hedit/core.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace hedit {

enum class TraceErrc {
  io_error = 1,
  bad_magic = 2,
  version_mismatch = 3,
  invalid_header = 4,
  truncated = 5,
  trailing_bytes = 6,
  non_finite = 7,
  bad_token_kind = 8,
  shape_mismatch = 9,
};

inline const char* to_string(TraceErrc c) {
  switch (c) {
    case TraceErrc::io_error: return "io error";
    case TraceErrc::bad_magic: return "bad magic";
    case TraceErrc::version_mismatch: return "version mismatch";
    case TraceErrc::invalid_header: return "invalid header";
    case TraceErrc::truncated: return "truncated file";
    case TraceErrc::trailing_bytes: return "trailing bytes";
    case TraceErrc::non_finite: return "non-finite float";
    case TraceErrc::bad_token_kind: return "bad token kind";
    case TraceErrc::shape_mismatch: return "shape mismatch";
  }
  return "unknown";
}

class TraceError : public std::runtime_error {
 public:
  TraceError(TraceErrc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}
  TraceErrc code() const { return code_; }

 private:
  TraceErrc code_;
};

enum class TokenKind : std::uint8_t { Generated = 0, Visual = 1, Prompt = 2 };

inline constexpr std::array<char, 4> kTraceMagic{'H', 'E', 'D', 'T'};
inline constexpr std::array<char, 4> kGroundTruthMagic{'H', 'E', 'D', 'G'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kFlagPromptInTextCache = 1u;
inline constexpr std::size_t kTraceHeaderBytes = 24;
inline constexpr std::size_t kGroundTruthHeaderBytes = 20;

struct TraceHeader {
  std::uint32_t version = kFormatVersion;
  std::uint32_t d = 0;
  std::uint32_t n_v = 0;
  std::uint32_t n_tokens = 0;
  std::uint32_t flags = 0;

  bool prompt_in_text_cache() const { return (flags & kFlagPromptInTextCache) != 0; }
  bool operator==(const TraceHeader&) const = default;
};

struct TraceBody {
  std::vector<float> visual;         // n_v * d
  std::vector<float> edit_states;    // n_tokens * d
  std::vector<float> anchor_states;  // n_tokens * d
  std::vector<TokenKind> kinds;      // n_tokens

  bool operator==(const TraceBody&) const = default;
};

struct Trace {
  TraceHeader header;
  TraceBody body;

  Index dim() const { return header.d; }
  Index token_count() const { return header.n_tokens; }

  Matrix visual_matrix() const {
    Matrix m(header.n_v, header.d);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = body.visual[i * header.d + j];
    return m;
  }
  HiddenState edit_state(Index t) const { return row(body.edit_states, t); }
  HiddenState anchor_state(Index t) const { return row(body.anchor_states, t); }
  TokenKind kind(Index t) const { return body.kinds[t]; }

 private:
  Vector row(const std::vector<float>& flat, Index t) const {
    Vector v(header.d);
    for (Index j = 0; j < v.size(); ++j) v[j] = flat[t * header.d + j];
    return v;
  }
};

/// Exact file size implied by a header.
inline std::uint64_t expected_trace_bytes(const TraceHeader& h) {
  const std::uint64_t d = h.d;
  return kTraceHeaderBytes + 4ull * h.n_v * d + h.n_tokens * (8ull * d + 1ull);
}

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::vector<unsigned char>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline void put_floats(std::vector<unsigned char>& out, const std::vector<float>& values,
                       std::size_t begin, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) put_f32(out, values[begin + i]);
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TraceError(TraceErrc::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TraceError(TraceErrc::io_error, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TraceError(TraceErrc::io_error, "write failed for " + path.string());
}

inline bool finite_all(const std::vector<float>& v) {
  for (float f : v)
    if (!std::isfinite(f)) return false;
  return true;
}

}  // namespace detail

/// Throws TraceError unless header and body are mutually consistent.
inline void validate_trace(const Trace& t) {
  const auto& h = t.header;
  if (h.version != kFormatVersion) {
    throw TraceError(TraceErrc::version_mismatch, "version " + std::to_string(h.version));
  }
  if (h.d == 0 || h.n_v == 0 || h.n_tokens == 0) {
    throw TraceError(TraceErrc::invalid_header, "d, n_v and n_tokens must all be >= 1");
  }
  const std::size_t d = h.d;
  if (t.body.visual.size() != h.n_v * d || t.body.edit_states.size() != h.n_tokens * d ||
      t.body.anchor_states.size() != h.n_tokens * d || t.body.kinds.size() != h.n_tokens) {
    throw TraceError(TraceErrc::shape_mismatch, "body sizes disagree with header");
  }
  if (!detail::finite_all(t.body.visual) || !detail::finite_all(t.body.edit_states) ||
      !detail::finite_all(t.body.anchor_states)) {
    throw TraceError(TraceErrc::non_finite, "trace contains NaN or Inf");
  }
  for (auto k : t.body.kinds) {
    if (static_cast<std::uint8_t>(k) > 2) {
      throw TraceError(TraceErrc::bad_token_kind, std::to_string(static_cast<int>(k)));
    }
  }
}

inline std::vector<unsigned char> encode_trace(const Trace& t) {
  validate_trace(t);
  const auto& h = t.header;
  std::vector<unsigned char> out;
  out.reserve(expected_trace_bytes(h));
  out.insert(out.end(), kTraceMagic.begin(), kTraceMagic.end());
  for (auto v : {h.version, h.d, h.n_v, h.n_tokens, h.flags}) detail::put_u32(out, v);
  detail::put_floats(out, t.body.visual, 0, t.body.visual.size());
  for (std::size_t k = 0; k < h.n_tokens; ++k) {
    detail::put_floats(out, t.body.edit_states, k * h.d, h.d);
    detail::put_floats(out, t.body.anchor_states, k * h.d, h.d);
    out.push_back(static_cast<unsigned char>(t.body.kinds[k]));
  }
  return out;
}

inline Trace decode_trace(const std::vector<unsigned char>& bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kTraceMagic.data(), 4) != 0) {
    throw TraceError(TraceErrc::bad_magic, "expected HEDT");
  }
  if (bytes.size() < kTraceHeaderBytes) {
    throw TraceError(TraceErrc::truncated, "header needs 24 bytes, file has " +
                                               std::to_string(bytes.size()));
  }
  Trace t;
  auto& h = t.header;
  const unsigned char* p = bytes.data() + 4;
  h.version = detail::get_u32(p);
  h.d = detail::get_u32(p + 4);
  h.n_v = detail::get_u32(p + 8);
  h.n_tokens = detail::get_u32(p + 12);
  h.flags = detail::get_u32(p + 16);
  if (h.version != kFormatVersion) {
    throw TraceError(TraceErrc::version_mismatch, "version " + std::to_string(h.version));
  }
  if (h.d == 0 || h.n_v == 0 || h.n_tokens == 0) {
    throw TraceError(TraceErrc::invalid_header, "d, n_v and n_tokens must all be >= 1");
  }
  const std::uint64_t expected = expected_trace_bytes(h);
  if (bytes.size() < expected) {
    throw TraceError(TraceErrc::truncated, "expected " + std::to_string(expected) +
                                               " bytes, file has " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw TraceError(TraceErrc::trailing_bytes, "expected " + std::to_string(expected) +
                                                    " bytes, file has " +
                                                    std::to_string(bytes.size()));
  }

  const std::size_t d = h.d;
  p = bytes.data() + kTraceHeaderBytes;
  t.body.visual.resize(h.n_v * d);
  for (auto& f : t.body.visual) {
    f = detail::get_f32(p);
    p += 4;
  }
  t.body.edit_states.resize(h.n_tokens * d);
  t.body.anchor_states.resize(h.n_tokens * d);
  t.body.kinds.resize(h.n_tokens);
  for (std::size_t k = 0; k < h.n_tokens; ++k) {
    for (std::size_t j = 0; j < d; ++j, p += 4) t.body.edit_states[k * d + j] = detail::get_f32(p);
    for (std::size_t j = 0; j < d; ++j, p += 4) t.body.anchor_states[k * d + j] = detail::get_f32(p);
    t.body.kinds[k] = static_cast<TokenKind>(*p++);
  }
  validate_trace(t);
  return t;
}

inline void write_trace(const std::filesystem::path& path, const Trace& t) {
  detail::spill(path, encode_trace(t));
}

inline Trace read_trace(const std::filesystem::path& path) {
  return decode_trace(detail::slurp(path));
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar
// ---------------------------------------------------------------------------

struct GroundTruth {
  Matrix visual;  // d x r
  Matrix prior;   // d x q
};

inline std::vector<unsigned char> encode_ground_truth(const GroundTruth& g) {
  const Index d = g.visual.rows();
  if (g.prior.rows() != d || d < 1) {
    throw TraceError(TraceErrc::shape_mismatch, "ground-truth bases disagree on d");
  }
  std::vector<unsigned char> out;
  out.insert(out.end(), kGroundTruthMagic.begin(), kGroundTruthMagic.end());
  for (Index v : {Index{kFormatVersion}, d, g.visual.cols(), g.prior.cols()})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  for (const Matrix* m : {&g.visual, &g.prior})
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < m->cols(); ++j) detail::put_f32(out, static_cast<float>((*m)(i, j)));
  return out;
}

inline GroundTruth decode_ground_truth(const std::vector<unsigned char>& bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kGroundTruthMagic.data(), 4) != 0) {
    throw TraceError(TraceErrc::bad_magic, "expected HEDG");
  }
  if (bytes.size() < kGroundTruthHeaderBytes) throw TraceError(TraceErrc::truncated, "header");
  const unsigned char* p = bytes.data() + 4;
  const std::uint32_t version = detail::get_u32(p);
  const std::uint64_t d = detail::get_u32(p + 4);
  const std::uint64_t r = detail::get_u32(p + 8);
  const std::uint64_t q = detail::get_u32(p + 12);
  if (version != kFormatVersion) throw TraceError(TraceErrc::version_mismatch, "sidecar");
  if (d == 0) throw TraceError(TraceErrc::invalid_header, "d must be >= 1");
  const std::uint64_t expected = kGroundTruthHeaderBytes + 4 * d * (r + q);
  if (bytes.size() < expected) throw TraceError(TraceErrc::truncated, "sidecar body");
  if (bytes.size() > expected) throw TraceError(TraceErrc::trailing_bytes, "sidecar body");
  p = bytes.data() + kGroundTruthHeaderBytes;
  GroundTruth g{Matrix(d, r), Matrix(d, q)};
  for (Matrix* m : {&g.visual, &g.prior})
    for (Index i = 0; i < m->rows(); ++i)
      for (Index j = 0; j < m->cols(); ++j, p += 4) {
        const float f = detail::get_f32(p);
        if (!std::isfinite(f)) throw TraceError(TraceErrc::non_finite, "sidecar");
        (*m)(i, j) = f;
      }
  return g;
}

inline void write_ground_truth(const std::filesystem::path& path, const GroundTruth& g) {
  detail::spill(path, encode_ground_truth(g));
}

inline GroundTruth read_ground_truth(const std::filesystem::path& path) {
  return decode_ground_truth(detail::slurp(path));
}

}  // namespace hedit
