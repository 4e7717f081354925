// SPDX-License-Identifier: Apache-2.0
#include "gfolds/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace gfolds {

namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kWarn)};
std::mutex g_mutex;

void emit(LogLevel level, std::string_view tag, std::string_view message) {
  if (g_level.load(std::memory_order_relaxed) < static_cast<int>(level)) {
    return;
  }
  std::lock_guard lock(g_mutex);
  std::cerr << "[gfolds " << tag << "] " << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) noexcept { g_level.store(static_cast<int>(level)); }

LogLevel log_level() noexcept { return static_cast<LogLevel>(g_level.load()); }

void log_warn(std::string_view message) { emit(LogLevel::kWarn, "warn", message); }

void log_info(std::string_view message) { emit(LogLevel::kInfo, "info", message); }

}  // namespace gfolds
