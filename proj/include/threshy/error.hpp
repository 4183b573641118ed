#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace threshy {

enum class ErrorCode {
  parse,          // malformed input document or CSV
  validation,     // well-formed input that violates an invariant
  task_mismatch,  // profile/dataset task kinds disagree
  not_found,
  version,        // unsupported profile format_version
  cancelled,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// CSV errors carry the 1-based physical line they were raised on (0 = whole file).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::parse,
              line == 0 ? message : "line " + std::to_string(line) + ": " + message,
              message),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::task_mismatch: return "task_mismatch";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::version: return "unsupported_version";
    case ErrorCode::cancelled: return "cancelled";
  }
  return "error";
}

}  // namespace threshy
