#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "upv/error.hpp"

namespace upv {

using token_id = std::uint32_t;

/// Token ids are embedded through their fixed-width binary representation:
/// big-endian, one 0.0/1.0 float per bit, bit_width = ceil(log2(size)).
struct vocabulary {
  std::uint32_t size = 65536;
  int bit_width = 16;

  static vocabulary of_size(std::uint32_t size) {
    require(size >= 2, errc::invariant_violation, "vocab_size: must be >= 2");
    int bits = 0;
    while ((std::uint64_t{1} << bits) < size) ++bits;
    require(bits <= 32, errc::invariant_violation, "vocab_size: bit width exceeds 32");
    return vocabulary{size, bits == 0 ? 1 : bits};
  }

  bool operator==(const vocabulary&) const = default;
};

using bit_vector = std::vector<float>;

inline bit_vector encode_token_binary(token_id t, const vocabulary& v) {
  require(t < v.size, errc::out_of_vocab,
          "token " + std::to_string(t) + " >= vocab size " + std::to_string(v.size));
  bit_vector bits(static_cast<std::size_t>(v.bit_width));
  for (int i = 0; i < v.bit_width; ++i) {
    bits[static_cast<std::size_t>(i)] = static_cast<float>((t >> (v.bit_width - 1 - i)) & 1u);
  }
  return bits;
}

inline token_id decode_token_binary(const bit_vector& bits, const vocabulary& v) {
  require(static_cast<int>(bits.size()) == v.bit_width, errc::shape_mismatch,
          "bit vector length != bit_width");
  token_id t = 0;
  for (float b : bits) t = (t << 1) | (b >= 0.5f ? 1u : 0u);
  require(t < v.size, errc::out_of_vocab, "decoded id outside vocabulary");
  return t;
}

/// All scheme hyperparameters. Defaults mirror the standard setting:
/// gamma 0.5, delta 2.0, window 5, top-k 20, beam width 8.
struct watermark_config {
  double gamma = 0.5;        // target watermarked-token ratio
  double delta = 2.0;        // logit boost for watermarked tokens
  int window = 5;            // tokens read by the generation network
  int top_k = 20;            // candidates tagged under top-k sampling
  int beam_width = 8;        // beam size for beam-search tagging
  double z_threshold = 1.0;  // detection threshold on the z-score
  double sigma = 0.0;        // estimated std of the generator's green ratio
  vocabulary vocab{};
  std::uint64_t seed = 1;

  void validate() const {
    require(vocab.size >= 2, errc::invariant_violation, "vocab_size: must be >= 2");
    require(vocab.bit_width >= 1 && vocab.bit_width <= 32, errc::invariant_violation,
            "vocab_size: bit width out of range");
    require((std::uint64_t{1} << vocab.bit_width) >= vocab.size &&
                (vocab.bit_width == 1 || (std::uint64_t{1} << (vocab.bit_width - 1)) < vocab.size),
            errc::invariant_violation, "vocab_size: inconsistent bit width");
    require(gamma > 0.0 && gamma < 1.0, errc::invariant_violation, "gamma: must be in (0,1)");
    require(delta >= 0.0, errc::invariant_violation, "delta: must be >= 0");
    require(window >= 1, errc::invariant_violation, "window: must be >= 1");
    require(top_k >= 1 && static_cast<std::uint32_t>(top_k) <= vocab.size,
            errc::invariant_violation, "top_k: must be in [1, vocab_size]");
    require(beam_width >= 1 && beam_width <= top_k, errc::invariant_violation,
            "beam_width: must be in [1, top_k]");
    require(sigma >= 0.0 && sigma < gamma, errc::invariant_violation,
            "sigma: must be in [0, gamma)");
  }
};

namespace detail {

inline bool parse_kv_line(const std::string& line, std::string& key, std::string& value) {
  std::string s = line;
  if (auto pos = s.find('#'); pos != std::string::npos) s.erase(pos);
  auto trim = [](std::string& t) {
    const char* ws = " \t\r\n";
    auto b = t.find_first_not_of(ws);
    auto e = t.find_last_not_of(ws);
    t = (b == std::string::npos) ? std::string{} : t.substr(b, e - b + 1);
  };
  trim(s);
  if (s.empty()) return false;
  std::string::size_type sep = s.find('=');
  if (sep == std::string::npos) sep = s.find_first_of(" \t");
  require(sep != std::string::npos, errc::parse_error, "expected 'key = value': " + line);
  key = s.substr(0, sep);
  value = s.substr(sep + 1);
  trim(key);
  trim(value);
  require(!key.empty() && !value.empty(), errc::parse_error, "empty key or value: " + line);
  return true;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  require(static_cast<bool>(in) && in.peek() == std::char_traits<char>::eof(), errc::parse_error,
          key + ": cannot parse '" + value + "'");
  return out;
}

}  // namespace detail

/// Parses the flat key/value config format. Unset keys keep their defaults.
inline watermark_config parse_config(const std::string& text) {
  watermark_config cfg;
  std::uint64_t vocab_size = cfg.vocab.size;
  std::istringstream in(text);
  std::string line, key, value;
  while (std::getline(in, line)) {
    if (!detail::parse_kv_line(line, key, value)) continue;
    if (key == "vocab_size") {
      vocab_size = detail::parse_number<std::uint64_t>(key, value);
      require(vocab_size >= 2 && vocab_size <= 0xFFFFFFFFULL, errc::invariant_violation,
              "vocab_size: out of range");
    } else if (key == "gamma") {
      cfg.gamma = detail::parse_number<double>(key, value);
    } else if (key == "delta") {
      cfg.delta = detail::parse_number<double>(key, value);
    } else if (key == "window") {
      cfg.window = detail::parse_number<int>(key, value);
    } else if (key == "top_k") {
      cfg.top_k = detail::parse_number<int>(key, value);
    } else if (key == "beam_width") {
      cfg.beam_width = detail::parse_number<int>(key, value);
    } else if (key == "z_threshold") {
      cfg.z_threshold = detail::parse_number<double>(key, value);
    } else if (key == "sigma") {
      cfg.sigma = detail::parse_number<double>(key, value);
    } else if (key == "seed") {
      cfg.seed = detail::parse_number<std::uint64_t>(key, value);
    } else {
      raise(errc::parse_error, "unknown key '" + key + "'");
    }
  }
  cfg.vocab = vocabulary::of_size(static_cast<std::uint32_t>(vocab_size));
  cfg.validate();
  return cfg;
}

inline watermark_config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline std::string format_config(const watermark_config& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "vocab_size = " << cfg.vocab.size << "\n"
      << "gamma = " << cfg.gamma << "\n"
      << "delta = " << cfg.delta << "\n"
      << "window = " << cfg.window << "\n"
      << "top_k = " << cfg.top_k << "\n"
      << "beam_width = " << cfg.beam_width << "\n"
      << "z_threshold = " << cfg.z_threshold << "\n"
      << "sigma = " << cfg.sigma << "\n"
      << "seed = " << cfg.seed << "\n";
  return out.str();
}

inline void save_config(const watermark_config& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write config file: " + path.string());
  out << format_config(cfg);
}

}  // namespace upv
