#include "omnidist/camera_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "omnidist/errors.hpp"

namespace omnidist {

namespace {

using nlohmann::json;

double require_number(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number())
        throw FormatError(std::string("camera spec: missing or non-numeric field '") + field + "'");
    return j[field].get<double>();
}

// Shared linear interpolation over the knot table. `forward` selects the
// r -> theta direction, the inverse swaps columns.
double interp(const std::vector<ThetaRKnot>& table, double x, bool r_to_theta) {
    const auto key = [&](const ThetaRKnot& k) { return r_to_theta ? k.r_mm : k.theta_rad; };
    const auto val = [&](const ThetaRKnot& k) { return r_to_theta ? k.theta_rad : k.r_mm; };

    if (x < 0.0 || x > key(table.back()))
        throw OutOfCalibrationRange(
            (r_to_theta ? std::string("radius ") : std::string("theta ")) + std::to_string(x) +
            " outside calibrated range [0, " + std::to_string(key(table.back())) + "]");

    // upper_bound never returns begin(): key(front) == 0 <= x.
    auto hi = std::upper_bound(table.begin(), table.end(), x,
                               [&](double v, const ThetaRKnot& k) { return v < key(k); });
    if (hi == table.end()) return val(table.back());  // x exactly at the last knot
    auto lo = hi - 1;
    if (x == key(*lo)) return val(*lo);
    const double t = (x - key(*lo)) / (key(*hi) - key(*lo));
    return val(*lo) + t * (val(*hi) - val(*lo));
}

}  // namespace

void validate_camera(const CameraModel& model) {
    const auto& t = model.theta_r_table;
    if (t.empty()) throw FormatError("camera spec: empty theta_r_table");
    if (model.pixel_pitch_mm <= 0.0) throw FormatError("camera spec: pixel_pitch_mm must be > 0");
    if (model.height_m <= 0.0) throw FormatError("camera spec: height_m must be > 0");
    if (t.front().r_mm != 0.0 || t.front().theta_rad != 0.0)
        throw CalibrationError("theta_r_table must start at (0, 0)");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].theta_rad < 0.0 || t[i].theta_rad >= std::numbers::pi)
            throw CalibrationError("theta_r_table: theta out of [0, pi)");
        if (i > 0 && (t[i].r_mm <= t[i - 1].r_mm || t[i].theta_rad <= t[i - 1].theta_rad))
            throw CalibrationError("theta_r_table must be strictly increasing in both columns");
    }
}

CameraModel load_camera(const std::string& document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::exception& e) {
        throw FormatError(std::string("camera spec: ") + e.what());
    }
    if (!j.is_object()) throw FormatError("camera spec: document is not an object");

    CameraModel m;
    m.pixel_pitch_mm = require_number(j, "pixel_pitch_mm");
    m.height_m = require_number(j, "height_m");

    if (!j.contains("principal_point") || !j["principal_point"].is_array() ||
        j["principal_point"].size() != 2)
        throw FormatError("camera spec: principal_point must be [c_u, c_v]");
    m.principal_point = {j["principal_point"][0].get<double>(),
                         j["principal_point"][1].get<double>()};

    if (!j.contains("pose_rad") || !j["pose_rad"].is_array() || j["pose_rad"].size() != 3)
        throw FormatError("camera spec: pose_rad must be [pitch, roll, yaw]");
    m.pose = {j["pose_rad"][0].get<double>(), j["pose_rad"][1].get<double>(),
              j["pose_rad"][2].get<double>()};

    if (!j.contains("theta_r_table") || !j["theta_r_table"].is_array())
        throw FormatError("camera spec: missing theta_r_table");
    for (const auto& row : j["theta_r_table"]) {
        if (!row.is_array() || row.size() != 2)
            throw FormatError("camera spec: theta_r_table rows must be [r_mm, theta_rad]");
        m.theta_r_table.push_back({row[0].get<double>(), row[1].get<double>()});
    }

    validate_camera(m);
    return m;
}

std::string write_camera(const CameraModel& model) {
    json j;
    j["pixel_pitch_mm"] = model.pixel_pitch_mm;
    j["principal_point"] = {model.principal_point.x, model.principal_point.y};
    j["height_m"] = model.height_m;
    j["pose_rad"] = {model.pose.pitch_rad, model.pose.roll_rad, model.pose.yaw_rad};
    auto table = json::array();
    for (const auto& k : model.theta_r_table) table.push_back({k.r_mm, k.theta_rad});
    j["theta_r_table"] = std::move(table);
    return j.dump(2) + "\n";
}

double theta_from_radius(const CameraModel& model, double r_mm) {
    return interp(model.theta_r_table, r_mm, true);
}

double radius_from_theta(const CameraModel& model, double theta_rad) {
    return interp(model.theta_r_table, theta_rad, false);
}

Mat3 pose_rotation(const Pose& pose) {
    return Mat3::rot_z(pose.yaw_rad) * Mat3::rot_y(pose.pitch_rad) * Mat3::rot_x(pose.roll_rad);
}

Vec3 pixel_to_ray(const CameraModel& model, Vec2 pixel) {
    const Vec2 d = pixel - model.principal_point;
    const double r_mm = model.pixel_pitch_mm * d.norm();
    const double theta = theta_from_radius(model, r_mm);
    const double phi = (d.x == 0.0 && d.y == 0.0) ? 0.0 : std::atan2(d.y, d.x);
    const Vec3 cam_ray{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                       -std::cos(theta)};
    return (pose_rotation(model.pose) * cam_ray).normalized();
}

GroundPoint ground_intersection(const CameraModel& model, Vec2 pixel) {
    const Vec3 ray = pixel_to_ray(model, pixel);
    if (ray.z >= 0.0)
        throw NoGroundIntersection("pixel ray does not point below the horizon");
    const double t = model.height_m / (-ray.z);
    return {t * ray.x, t * ray.y};
}

double ground_distance(const CameraModel& model, Vec2 pixel) {
    return ground_intersection(model, pixel).distance_m();
}

Vec2 ground_point_to_pixel(const CameraModel& model, GroundPoint point) {
    // The ray from the camera center (0,0,H) to the point fixes the view
    // direction; mapping it back to the camera frame gives (theta, phi)
    // directly, for any pose.
    const Vec3 dir = Vec3{point.x_m, point.y_m, -model.height_m}.normalized();
    const Vec3 s = pose_rotation(model.pose).transposed() * dir;
    const double theta = std::acos(std::clamp(-s.z, -1.0, 1.0));
    const double phi = (s.x == 0.0 && s.y == 0.0) ? 0.0 : std::atan2(s.y, s.x);
    const double r_px = radius_from_theta(model, theta) / model.pixel_pitch_mm;
    return model.principal_point + Vec2{std::cos(phi), std::sin(phi)} * r_px;
}

CameraModel shift_principal_point(const CameraModel& model, double dx_px, double dy_px) {
    CameraModel out = model;
    out.principal_point = model.principal_point + Vec2{dx_px, dy_px};
    return out;
}

CameraModel perturb_pose(const CameraModel& model, double dpitch_rad, double droll_rad) {
    CameraModel out = model;
    out.pose.pitch_rad += dpitch_rad;
    out.pose.roll_rad += droll_rad;
    return out;
}

CameraModel make_synthetic_camera(int image_side_px, double height_m, Pose pose) {
    if (image_side_px < 2) throw ConfigError("make_synthetic_camera: image side too small");
    CameraModel m;
    constexpr double chip_half_side_mm = 0.96;
    constexpr double focal_mm = 0.7317;
    constexpr double compression = 0.08;  // mild rim compression
    constexpr double theta_max = 1.5;
    constexpr int knots = 31;
    m.pixel_pitch_mm = 2.0 * chip_half_side_mm / image_side_px;
    m.principal_point = {image_side_px / 2.0, image_side_px / 2.0};
    m.height_m = height_m;
    m.pose = pose;
    for (int i = 0; i < knots; ++i) {
        const double theta = theta_max * i / (knots - 1);
        m.theta_r_table.push_back({focal_mm * theta * (1.0 - compression * theta * theta), theta});
    }
    validate_camera(m);
    return m;
}

}  // namespace omnidist
