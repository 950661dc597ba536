#include "omnidist/normalization.hpp"

#include <cmath>

#include "omnidist/errors.hpp"

namespace omnidist {

void validate(const NormalizationSpec& spec) {
    if (spec.d_max <= 0.0) throw ConfigError("normalization: d_max must be > 0");
    if (spec.epsilon <= 0.0 || spec.epsilon >= 1.0)
        throw ConfigError("normalization: epsilon must be in (0, 1)");
    if (spec.mode == NormMode::log && spec.d_max + spec.epsilon <= 1.0)
        throw ConfigError("normalization: log mode needs d_max + epsilon > 1");
}

double normalize(const NormalizationSpec& spec, double d, ClampStats* stats) {
    if (d < 0.0) throw DomainError("normalize: negative distance");
    double y = 0.0;
    if (spec.mode == NormMode::linear) {
        y = d / spec.d_max;
    } else {
        y = std::log(d + spec.epsilon) / std::log(spec.d_max + spec.epsilon);
    }
    if (y > 1.0) {
        if (stats) ++stats->high;
        return 1.0;
    }
    if (y < 0.0) {  // log mode with d + eps < 1
        if (stats) ++stats->low;
        return 0.0;
    }
    return y;
}

double denormalize(const NormalizationSpec& spec, double y) {
    if (y < 0.0 || y > 1.0) throw DomainError("denormalize: value outside [0, 1]");
    if (spec.mode == NormMode::linear) return y * spec.d_max;
    return std::exp(y * std::log(spec.d_max + spec.epsilon)) - spec.epsilon;
}

double denormalize_clamped(const NormalizationSpec& spec, double y, ClampStats* stats) {
    if (y < 0.0) {
        if (stats) ++stats->low;
        y = 0.0;
    } else if (y > 1.0) {
        if (stats) ++stats->high;
        y = 1.0;
    }
    return denormalize(spec, y);
}

NormMode norm_mode_from_string(const std::string& s) {
    if (s == "linear") return NormMode::linear;
    if (s == "log") return NormMode::log;
    throw ConfigError("normalization: unknown mode '" + s + "'");
}

std::string to_string(NormMode mode) {
    return mode == NormMode::linear ? "linear" : "log";
}

}  // namespace omnidist
