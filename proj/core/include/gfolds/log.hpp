// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace gfolds {

enum class LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2 };

// Process-wide threshold for messages written to stderr. Default kWarn.
void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

void log_warn(std::string_view message);
void log_info(std::string_view message);

}  // namespace gfolds
