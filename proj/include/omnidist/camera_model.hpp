#pragma once

#include <string>
#include <vector>

#include "omnidist/geometry.hpp"

namespace omnidist {

// One empirical calibration knot: chip radius (mm) against the incidence
// angle from the optical axis (rad).
struct ThetaRKnot {
    double r_mm = 0.0;
    double theta_rad = 0.0;
};

// Rotation of the nominally nadir-pointing optical axis, radians.
struct Pose {
    double pitch_rad = 0.0;
    double roll_rad = 0.0;
    double yaw_rad = 0.0;
};

// Calibrated downward-facing fisheye camera.
//
// Conventions (fixed here, used by every operation):
//  - World frame: right-handed, z up, ground plane z = 0, camera center at
//    (0, 0, height_m). At identity pose the optical axis points along -z and
//    world +x / +y are the directions of image +u / +v.
//  - Image frame: continuous sub-pixel coordinates, origin at the top-left,
//    u right, v down.
//  - Pose is applied to the nadir frame as yaw * pitch * roll, i.e.
//    R = Rz(yaw) * Ry(pitch) * Rx(roll) acting on camera-frame rays.
//
// The theta_r_table is strictly increasing in both columns, starts at (0, 0)
// and is interpolated piecewise-linearly; lookups outside the table are hard
// errors, never extrapolated.
struct CameraModel {
    std::vector<ThetaRKnot> theta_r_table;
    double pixel_pitch_mm = 0.0;
    Vec2 principal_point;
    double height_m = 0.0;
    Pose pose;

    double max_radius_mm() const { return theta_r_table.back().r_mm; }
    double max_theta() const { return theta_r_table.back().theta_rad; }
};

// Point on the ground plane, camera-footprint frame (origin directly beneath
// the camera).
struct GroundPoint {
    double x_m = 0.0;
    double y_m = 0.0;
    double distance_m() const { return std::hypot(x_m, y_m); }
};

// Parses and validates a camera-spec document (JSON object with fields
// pixel_pitch_mm, principal_point, height_m, pose_rad = [pitch, roll, yaw],
// theta_r_table = [[r_mm, theta_rad], ...]).
// Throws FormatError on structural problems, CalibrationError on a
// non-monotone or otherwise invalid table.
CameraModel load_camera(const std::string& document);
std::string write_camera(const CameraModel& model);
void validate_camera(const CameraModel& model);

// Piecewise-linear table lookups, exact at knots and mutually inverse.
// Throw OutOfCalibrationRange beyond the calibrated range.
double theta_from_radius(const CameraModel& model, double r_mm);
double radius_from_theta(const CameraModel& model, double theta_rad);

Mat3 pose_rotation(const Pose& pose);

// Unit world-frame ray through a pixel. Throws OutOfCalibrationRange when the
// pixel lies outside the calibrated image disk.
Vec3 pixel_to_ray(const CameraModel& model, Vec2 pixel);

// Ground-plane intersection of the pixel ray; ground_distance is its
// horizontal range (with identity pose this is H * tan(theta)).
// Throws NoGroundIntersection for rays at or above the horizon.
GroundPoint ground_intersection(const CameraModel& model, Vec2 pixel);
double ground_distance(const CameraModel& model, Vec2 pixel);

// Inverse projection of a visible ground point. Exact inverse of
// ground_distance along the same azimuth for any pose: the ray from the
// camera center to the point determines (theta, phi) in closed form.
Vec2 ground_point_to_pixel(const CameraModel& model, GroundPoint point);

// Perturbed copies for the robustness studies; the input model is unchanged.
CameraModel shift_principal_point(const CameraModel& model, double dx_px, double dy_px);
CameraModel perturb_pose(const CameraModel& model, double dpitch_rad, double droll_rad);

// Synthetic equidistant-like calibration (r = f * theta * (1 - k * theta^2))
// covering theta in [0, 1.5] rad. The real calibration curve of the reference
// hardware is not public; this stand-in has the same qualitative shape (mild
// compression toward the rim) and is what the scene generator and the default
// tooling use. Chip half-side is fixed at 0.96 mm so pixel pitch scales with
// the requested resolution.
CameraModel make_synthetic_camera(int image_side_px, double height_m = 3.0,
                                  Pose pose = {});

}  // namespace omnidist
