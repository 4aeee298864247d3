#pragma once

#include <cstdio>
#include <string>

namespace maneuver {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::info;
  return level;
}

inline bool set_log_level(const std::string& name) {
  if (name == "error") log_level() = LogLevel::error;
  else if (name == "warn") log_level() = LogLevel::warn;
  else if (name == "info") log_level() = LogLevel::info;
  else if (name == "debug") log_level() = LogLevel::debug;
  else return false;
  return true;
}

// Logs go to stderr so stdout stays clean for machine-readable output.
template <typename... Args>
void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
  if (lvl > log_level()) return;
  std::fprintf(stderr, "[%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

#define MANEUVER_LOG_ERROR(...) ::maneuver::log_at(::maneuver::LogLevel::error, "error", __VA_ARGS__)
#define MANEUVER_LOG_WARN(...)  ::maneuver::log_at(::maneuver::LogLevel::warn,  "warn",  __VA_ARGS__)
#define MANEUVER_LOG_INFO(...)  ::maneuver::log_at(::maneuver::LogLevel::info,  "info",  __VA_ARGS__)
#define MANEUVER_LOG_DEBUG(...) ::maneuver::log_at(::maneuver::LogLevel::debug, "debug", __VA_ARGS__)

}  // namespace maneuver
