#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <initializer_list>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

namespace p1451::log {

// One line per event on standard error:
//   2026-01-02T03:04:05.678Z event=connect clientId=app-1 decision=accept

inline std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

inline std::string timestamp() {
    using namespace std::chrono;
    auto now = system_clock::now();
    auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
    std::time_t t = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(ms.count()));
    return buf;
}

using Field = std::pair<std::string_view, std::string>;

inline void event(std::string_view name, std::initializer_list<Field> fields = {}) {
    std::string line = timestamp();
    line += " event=";
    line += name;
    for (const auto& [key, value] : fields) {
        line += ' ';
        line += key;
        line += '=';
        bool needs_quote = value.empty() || value.find(' ') != std::string::npos;
        if (needs_quote) line += '"';
        line += value;
        if (needs_quote) line += '"';
    }
    line += '\n';
    std::lock_guard lock(sink_mutex());
    std::fputs(line.c_str(), stderr);
    std::fflush(stderr);
}

}  // namespace p1451::log
