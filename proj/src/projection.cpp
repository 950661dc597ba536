#include "omnidist/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>
#include <vector>

#include "omnidist/errors.hpp"

namespace omnidist {

namespace {

constexpr double kPi = std::numbers::pi;

int max_threads() {
    if (const char* env = std::getenv("OMNIDIST_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// (theta, phi) view angles of a fisheye pixel. Throws OutOfCalibrationRange.
std::pair<double, double> fisheye_angles(const CameraModel& model, Vec2 pixel) {
    const Vec2 d = pixel - model.principal_point;
    const double theta = theta_from_radius(model, model.pixel_pitch_mm * d.norm());
    const double phi = (d.x == 0.0 && d.y == 0.0) ? 0.0 : std::atan2(d.y, d.x);
    return {theta, phi};
}

double quantize256(double x) { return std::round(x * 256.0) / 256.0; }

// Bilinear sample of one channel; sampling grid sits on integer pixel
// centers, anything outside returns the fill value.
double bilinear(const Image& img, double u, double v, int c) {
    if (u < 0.0 || v < 0.0 || u > img.width - 1.0 || v > img.height - 1.0) return 0.0;
    const int u0 = static_cast<int>(std::floor(u));
    const int v0 = static_cast<int>(std::floor(v));
    const int u1 = std::min(u0 + 1, img.width - 1);
    const int v1 = std::min(v0 + 1, img.height - 1);
    const double fu = u - u0;
    const double fv = v - v0;
    const double top = (1.0 - fu) * img.at(u0, v0, c) + fu * img.at(u1, v0, c);
    const double bot = (1.0 - fu) * img.at(u0, v1, c) + fu * img.at(u1, v1, c);
    return (1.0 - fv) * top + fv * bot;
}

}  // namespace

void validate(const EquirectSpec& spec) {
    if (spec.width_px < 2 || spec.height_px < 2)
        throw ConfigError("equirect: width and height must be >= 2");
    if (!(spec.theta_max_rad > 0.0) || spec.theta_max_rad > kPi)
        throw ConfigError("equirect: theta_max must be in (0, pi]");
}

Vec2 equirect_pixel_to_fisheye(const CameraModel& model, const EquirectSpec& spec,
                               Vec2 eq_pixel) {
    if (eq_pixel.x < 0.0 || eq_pixel.x > spec.width_px || eq_pixel.y < 0.0 ||
        eq_pixel.y > spec.height_px)
        throw DomainError("equirect pixel outside spec bounds");
    const double phi = -kPi + 2.0 * kPi * eq_pixel.x / spec.width_px;
    const double theta = spec.theta_max_rad * eq_pixel.y / spec.height_px;
    const double r_px = radius_from_theta(model, theta) / model.pixel_pitch_mm;
    return model.principal_point + Vec2{std::cos(phi), std::sin(phi)} * r_px;
}

Image fisheye_to_equirect(const Image& image, const CameraModel& model,
                          const EquirectSpec& spec) {
    validate(spec);
    Image out(spec.width_px, spec.height_px, image.channels);

    const auto remap_row = [&](int ve) {
        for (int ue = 0; ue < spec.width_px; ++ue) {
            Vec2 src;
            try {
                src = equirect_pixel_to_fisheye(model, spec,
                                                {static_cast<double>(ue), static_cast<double>(ve)});
            } catch (const OutOfCalibrationRange&) {
                continue;  // stays black
            }
            const double u = quantize256(src.x);
            const double v = quantize256(src.y);
            for (int c = 0; c < image.channels; ++c) {
                const double s = bilinear(image, u, v, c);
                out.at(ue, ve, c) = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
            }
        }
    };

    const int threads = std::min(max_threads(), spec.height_px);
    if (threads <= 1) {
        for (int ve = 0; ve < spec.height_px; ++ve) remap_row(ve);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int ve = t; ve < spec.height_px; ve += threads) remap_row(ve);
            });
        for (auto& th : pool) th.join();
    }
    return out;
}

EquirectBox bbox_to_equirect(const CameraModel& model, const EquirectSpec& spec,
                             const BBox& box, int samples) {
    validate(spec);
    if (!box.valid()) throw DomainError("bbox_to_equirect: degenerate box");
    if (samples < 4) throw ConfigError("bbox_to_equirect: need at least 4 samples");

    // Walk the rectangle perimeter at uniform arc length.
    const double l = box.left(), r = box.right(), t = box.top(), b = box.bottom();
    const double per = 2.0 * (box.w + box.h);
    std::vector<double> us, vs;
    us.reserve(samples);
    vs.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        double s = per * i / samples;
        Vec2 p;
        if (s < box.w) p = {l + s, t};
        else if ((s -= box.w) < box.h) p = {r, t + s};
        else if ((s -= box.h) < box.w) p = {r - s, b};
        else p = {l, b - (s - box.w)};

        const auto [theta, phi] = fisheye_angles(model, p);  // may throw
        us.push_back((phi + kPi) / (2.0 * kPi) * spec.width_px);
        vs.push_back(theta / spec.theta_max_rad * spec.height_px);
    }

    const auto width_of = [](const std::vector<double>& xs) {
        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        return *hi - *lo;
    };

    const double naive_width = width_of(us);
    bool wraps = false;
    // Azimuth span > pi means the samples hug the seam; re-frame to [0, 2pi)
    // columns and keep whichever frame is narrower.
    if (naive_width > 0.5 * spec.width_px) {
        std::vector<double> wrapped = us;
        for (double& u : wrapped)
            if (u < 0.5 * spec.width_px) u += spec.width_px;
        if (width_of(wrapped) < naive_width) {
            us = std::move(wrapped);
            wraps = true;
        }
    }

    const auto [ulo, uhi] = std::minmax_element(us.begin(), us.end());
    const auto [vlo, vhi] = std::minmax_element(vs.begin(), vs.end());
    BBox out{0.5 * (*ulo + *uhi), 0.5 * (*vlo + *vhi), *uhi - *ulo, *vhi - *vlo};
    return {out, wraps};
}

}  // namespace omnidist
