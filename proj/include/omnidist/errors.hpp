#pragma once

#include <stdexcept>
#include <string>

namespace omnidist {

// Error taxonomy shared by all modules. Every throwing operation documents
// which of these it raises.

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct OutOfCalibrationRange : std::runtime_error {
    explicit OutOfCalibrationRange(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoGroundIntersection : std::runtime_error {
    explicit NoGroundIntersection(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(const std::string& msg, long step)
        : std::runtime_error(msg), step(step) {}
    long step;
};

}  // namespace omnidist
