// Minimal stderr logger. Verbosity comes from the MSH_LOG environment
// variable: error, warn (default), info, debug.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace msh::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("MSH_LOG");
    if (env == nullptr) return Level::kWarn;
    if (std::strcmp(env, "error") == 0) return Level::kError;
    if (std::strcmp(env, "info") == 0) return Level::kInfo;
    if (std::strcmp(env, "debug") == 0) return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

inline void emit(Level level, const std::string& msg) {
  if (level > threshold()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[msh %s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void error(const std::string& msg) { emit(Level::kError, msg); }
inline void warn(const std::string& msg) { emit(Level::kWarn, msg); }
inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void debug(const std::string& msg) { emit(Level::kDebug, msg); }

}  // namespace msh::log
