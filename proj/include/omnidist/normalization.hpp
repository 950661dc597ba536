#pragma once

#include <string>

namespace omnidist {

enum class NormMode { linear, log };

// Maps metric distances to the network's [0, 1] output range and back.
// linear: y = d / d_max. log: y = log(d + eps) / log(d_max + eps),
// recovered as d = exp(y * log(d_max + eps)) - eps.
struct NormalizationSpec {
    NormMode mode = NormMode::linear;
    double d_max = 100.0;
    double epsilon = 1e-6;
};

// Throws ConfigError on invalid parameters (log mode additionally needs
// d_max + epsilon > 1 so the reference log is positive).
void validate(const NormalizationSpec& spec);

// Out-of-range inputs are clamped, not rejected: annotations beyond d_max are
// common and training must not abort. The counter is caller-owned.
struct ClampStats {
    long low = 0;
    long high = 0;
    long total() const { return low + high; }
};

// d < 0 throws DomainError; d > d_max clamps to 1 (counted when stats given).
double normalize(const NormalizationSpec& spec, double d, ClampStats* stats = nullptr);

// Strict contract: y outside [0, 1] throws DomainError.
double denormalize(const NormalizationSpec& spec, double y);

// Clamping variant for pipelines fed by unchecked values.
double denormalize_clamped(const NormalizationSpec& spec, double y, ClampStats* stats);

NormMode norm_mode_from_string(const std::string& s);
std::string to_string(NormMode mode);

}  // namespace omnidist
