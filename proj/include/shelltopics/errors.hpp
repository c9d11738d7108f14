#pragma once

#include <stdexcept>
#include <string>

namespace shelltopics {

// Error taxonomy surfaced as distinct CLI exit codes.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_io_error = 3;
inline constexpr int exit_model_error = 4;

} // namespace shelltopics
