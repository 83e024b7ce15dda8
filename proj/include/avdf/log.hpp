#pragma once

// Diagnostics go to stderr; AVDF_LOG=debug|info|quiet picks the level.

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace avdf {

enum class LogLevel { Quiet, Info, Debug };

inline LogLevel parse_log_level(const char* s) {
  if (s == nullptr) return LogLevel::Info;
  const std::string_view v(s);
  if (v == "debug") return LogLevel::Debug;
  if (v == "quiet" || v == "off") return LogLevel::Quiet;
  return LogLevel::Info;
}

inline LogLevel& log_level() {
  static LogLevel level = parse_log_level(std::getenv("AVDF_LOG"));
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << "[avdf] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[avdf:debug] " << msg << '\n';
}

}  // namespace avdf
