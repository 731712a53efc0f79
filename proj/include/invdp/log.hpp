#pragma once

// Library-wide logger. Verbosity comes from INVDP_LOG (trace, debug, info,
// warn, error, off); default is warn. Messages go to stderr.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace invdp {

inline spdlog::logger& log() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto l = spdlog::stderr_logger_mt("invdp");
        l->set_pattern("[%l] %v");
        auto level = spdlog::level::warn;
        if (const char* env = std::getenv("INVDP_LOG"); env && *env)
            level = spdlog::level::from_str(env);
        l->set_level(level);
        return l;
    }();
    return *instance;
}

}  // namespace invdp
