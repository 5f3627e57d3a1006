#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace flowlens::log {

inline std::atomic<bool>& quiet_flag() {
  static std::atomic<bool> q{false};
  return q;
}

inline void set_quiet(bool q) { quiet_flag().store(q); }

inline void warn(std::string_view msg) {
  static std::mutex m;
  if (quiet_flag().load()) return;
  std::lock_guard lock(m);
  std::clog << "flowlens: warning: " << msg << '\n';
}

}  // namespace flowlens::log
