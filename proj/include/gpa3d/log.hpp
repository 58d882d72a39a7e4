#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace gpa3d {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from GPA3D_LOG (error | info | debug); default info.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("GPA3D_LOG");
    if (!env) return LogLevel::kInfo;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel level, const char* fmt, Args... args) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::kError  ? "error"
                    : level == LogLevel::kInfo ? "info"
                                               : "debug";
  std::fprintf(stderr, "[gpa3d %s] ", tag);
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
}

#define GPA3D_LOG_INFO(...) ::gpa3d::log_at(::gpa3d::LogLevel::kInfo, __VA_ARGS__)
#define GPA3D_LOG_DEBUG(...) ::gpa3d::log_at(::gpa3d::LogLevel::kDebug, __VA_ARGS__)
#define GPA3D_LOG_ERROR(...) ::gpa3d::log_at(::gpa3d::LogLevel::kError, __VA_ARGS__)

}  // namespace gpa3d
