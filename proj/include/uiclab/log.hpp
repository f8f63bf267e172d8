#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace uiclab {

enum class LogLevel { debug = 0, info, warn, error, silent };

/// Messages at or above the threshold go to the sink (stderr by default).
void set_log_level(LogLevel level);
LogLevel log_level();
void set_log_sink(std::function<void(LogLevel, std::string_view)> sink);

void log_message(LogLevel level, std::string_view message);
inline void log_debug(std::string_view m) { log_message(LogLevel::debug, m); }
inline void log_info(std::string_view m) { log_message(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log_message(LogLevel::warn, m); }
inline void log_error(std::string_view m) { log_message(LogLevel::error, m); }

} // namespace uiclab
