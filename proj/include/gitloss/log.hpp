#pragma once

#include <cstdio>
#include <cstdlib>
#include <string_view>

#include <unistd.h>

#include <fmt/format.h>

namespace gitloss::log {

// Color only on a terminal and only when NO_COLOR is unset or empty.
inline bool use_color() {
  static const bool enabled = [] {
    const char* no_color = std::getenv("NO_COLOR");
    if (no_color && *no_color) return false;
    return ::isatty(STDERR_FILENO) == 1;
  }();
  return enabled;
}

inline bool& quiet() {
  static bool q = false;
  return q;
}

inline void emit(std::string_view tag, std::string_view color, std::string_view msg) {
  if (use_color()) {
    fmt::print(stderr, "\033[{}m[{}]\033[0m {}\n", color, tag, msg);
  } else {
    fmt::print(stderr, "[{}] {}\n", tag, msg);
  }
  std::fflush(stderr);
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (!quiet()) emit("info", "36", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  emit("warn", "33", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  emit("error", "31", fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace gitloss::log
