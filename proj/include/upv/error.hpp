#pragma once

#include <stdexcept>
#include <string>

namespace upv {

enum class errc {
  out_of_vocab,
  parse_error,
  invariant_violation,
  shape_mismatch,
  no_forward_recorded,
  divergence,
  window_size_mismatch,
  degenerate_vocab,
  sequence_too_short,
  construction_failure,
  empty_input,
  length_mismatch,
  io_error,
  bad_magic,
  version_mismatch,
  architecture_mismatch,
  degenerate_logits,
  insufficient_data,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::out_of_vocab: return "out_of_vocab";
    case errc::parse_error: return "parse_error";
    case errc::invariant_violation: return "invariant_violation";
    case errc::shape_mismatch: return "shape_mismatch";
    case errc::no_forward_recorded: return "no_forward_recorded";
    case errc::divergence: return "divergence";
    case errc::window_size_mismatch: return "window_size_mismatch";
    case errc::degenerate_vocab: return "degenerate_vocab";
    case errc::sequence_too_short: return "sequence_too_short";
    case errc::construction_failure: return "construction_failure";
    case errc::empty_input: return "empty_input";
    case errc::length_mismatch: return "length_mismatch";
    case errc::io_error: return "io_error";
    case errc::bad_magic: return "bad_magic";
    case errc::version_mismatch: return "version_mismatch";
    case errc::architecture_mismatch: return "architecture_mismatch";
    case errc::degenerate_logits: return "degenerate_logits";
    case errc::insufficient_data: return "insufficient_data";
  }
  return "unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// and tests can match on it instead of parsing messages.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) { throw error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) raise(code, msg);
}

}  // namespace upv
