#pragma once

#include <stdexcept>
#include <string>

namespace maneuver {

// Error taxonomy used across the toolkit. The CLI maps categories to exit
// codes: usage/config problems exit 2, everything else that throws exits 1.
enum class ErrorCategory {
  usage,       // bad command line (unknown flag, missing argument)
  config,      // config file present but invalid or inconsistent
  format,      // input file unreadable or structurally malformed
  validation,  // file parsed but violates a dataset invariant
  io,          // filesystem failure (cannot read/write)
  internal,    // broken internal invariant, always a bug
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::format: return "format";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::io: return "io";
    case ErrorCategory::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(std::string(to_string(category)) + ": " + message),
        category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void raise(ErrorCategory c, const std::string& msg) {
  throw Error(c, msg);
}

[[noreturn]] inline void usage_error(const std::string& msg) { raise(ErrorCategory::usage, msg); }
[[noreturn]] inline void config_error(const std::string& msg) { raise(ErrorCategory::config, msg); }
[[noreturn]] inline void format_error(const std::string& msg) { raise(ErrorCategory::format, msg); }
[[noreturn]] inline void validation_error(const std::string& msg) { raise(ErrorCategory::validation, msg); }
[[noreturn]] inline void io_error(const std::string& msg) { raise(ErrorCategory::io, msg); }
[[noreturn]] inline void internal_error(const std::string& msg) { raise(ErrorCategory::internal, msg); }

// Precondition helper for internal invariants. Cheap enough to keep on in
// release builds; these should never fire outside of development.
inline void require(bool cond, const std::string& msg) {
  if (!cond) internal_error(msg);
}

}  // namespace maneuver
