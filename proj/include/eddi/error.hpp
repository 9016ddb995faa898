#pragma once

#include <stdexcept>
#include <string>

namespace eddi {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  shape,
  numeric,
  config,
  capability,
  argument,
  evidence,
  data,
  state,
  not_found,
  conflict,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string field = {})
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Name of the offending field/parameter, when one applies.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::shape: return "shape_error";
    case ErrorKind::numeric: return "numeric_error";
    case ErrorKind::config: return "config_error";
    case ErrorKind::capability: return "capability_error";
    case ErrorKind::argument: return "argument_error";
    case ErrorKind::evidence: return "evidence_error";
    case ErrorKind::data: return "data_error";
    case ErrorKind::state: return "state_error";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "version_conflict";
  }
  return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what, std::string field = {}) {
  throw Error(kind, what, std::move(field));
}

}  // namespace eddi
