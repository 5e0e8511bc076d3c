#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace attnrel::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Controlled by ATTN_RELEVANCE_LOG (error|warn|info|debug); defaults to warn.
inline Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("ATTN_RELEVANCE_LOG");
        const std::string v = env ? env : "warn";
        if (v == "error") return Level::Error;
        if (v == "info") return Level::Info;
        if (v == "debug") return Level::Debug;
        return Level::Warn;
    }();
    return level;
}

inline void write(Level level, const std::string& message) {
    if (level > threshold()) return;
    const char* tag = level == Level::Error ? "error"
                      : level == Level::Warn ? "warn"
                      : level == Level::Info ? "info"
                                             : "debug";
    std::cerr << "[" << tag << "] " << message << "\n";
}

inline void error(const std::string& m) { write(Level::Error, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void debug(const std::string& m) { write(Level::Debug, m); }

} // namespace attnrel::log
