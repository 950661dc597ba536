#pragma once

#include <cstdint>

namespace omnidist {

// splitmix64 generator. Used everywhere randomness is needed so that datasets,
// training runs and tests are bit-identical across standard libraries and
// platforms (std::uniform_* distributions are not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // uniform integer in [lo, hi] inclusive
    long uniform_int(long lo, long hi) {
        if (hi <= lo) return lo;
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long>(next_u64() % span);
    }

    // Derives an independent stream, e.g. one per image of a dataset.
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
        Rng r(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

// FNV-1a 64-bit, used for content fingerprints in manifests and golden tests.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace omnidist
