#include "uiclab/log.hpp"

#include <cstdio>
#include <mutex>

namespace uiclab {

namespace {

std::mutex g_mutex;
LogLevel g_level = LogLevel::info;
std::function<void(LogLevel, std::string_view)> g_sink;

const char* level_tag(LogLevel level) {
    switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    case LogLevel::silent: break;
    }
    return "";
}

} // namespace

void set_log_level(LogLevel level) {
    std::lock_guard lock(g_mutex);
    g_level = level;
}

LogLevel log_level() {
    std::lock_guard lock(g_mutex);
    return g_level;
}

void set_log_sink(std::function<void(LogLevel, std::string_view)> sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void log_message(LogLevel level, std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (level < g_level || level == LogLevel::silent) {
        return;
    }
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    std::fprintf(stderr, "[uiclab %s] %.*s\n", level_tag(level), static_cast<int>(message.size()), message.data());
}

} // namespace uiclab
