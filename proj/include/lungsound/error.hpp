#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace lungsound {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration or API misuse (CLI exit code 2).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Broken or missing input data (CLI exit code 3).
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// A metric whose denominator is empty, e.g. sensitivity with no abnormal samples.
struct UndefinedMetricError : DataError {
    explicit UndefinedMetricError(const std::string& msg) : DataError(msg) {}
};

using WarnHandler = void (*)(const std::string&);

inline WarnHandler& warn_handler() {
    static WarnHandler handler = [](const std::string& msg) {
        std::fprintf(stderr, "warning: %s\n", msg.c_str());
    };
    return handler;
}

inline void warn(const std::string& msg) { warn_handler()(msg); }

}  // namespace lungsound
