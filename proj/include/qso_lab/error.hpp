#pragma once

#include <stdexcept>
#include <string>

namespace qso {

/// Coarse failure category; the CLI maps these onto exit statuses.
enum class ErrorKind {
  parse,  // a document could not be read or lacks required fields
  invalid_argument,  // bad parameters
  dimension_mismatch,
  validation,  // an object violates its mathematical invariants
  limit_exceeded,  // an enumeration bound was hit
  runtime,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::validation: return "validation";
    case ErrorKind::limit_exceeded: return "limit_exceeded";
    case ErrorKind::runtime: return "runtime";
  }
  return "unknown";
}

namespace detail {

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

inline void require_same_dim(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    throw Error(ErrorKind::dimension_mismatch,
                std::string(where) + ": dimension " + std::to_string(a) +
                    " does not match " + std::to_string(b));
  }
}

}  // namespace detail
}  // namespace qso
