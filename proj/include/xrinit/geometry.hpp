#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/rng.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(PointBehindCamera);
XRINIT_DEFINE_ERROR(EmptyLandmarkSet);
XRINIT_DEFINE_ERROR(InvalidSpec);

/// Pinhole model of the C-arm: the X-ray source is the optical center and
/// the detector is the image plane. Pixel (0,0) is the center of the
/// top-left pixel, u grows rightward, v downward.
struct CameraIntrinsics {
  double focal_px = 1600.0;
  Vec2 principal_point{256.0, 256.0};
  int width = 512;
  int height = 512;
  double detector_width_mm = 384.0;
  double source_detector_distance_mm = 1200.0;

  /// focal_px = sdd / (detector_width / width); principal point at the
  /// image center.
  static CameraIntrinsics from_geometry(int width, int height, double detector_width_mm,
                                        double source_detector_distance_mm) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.detector_width_mm = detector_width_mm;
    k.source_detector_distance_mm = source_detector_distance_mm;
    k.focal_px = source_detector_distance_mm / (detector_width_mm / width);
    k.principal_point = Vec2(width / 2.0, height / 2.0);
    return k;
  }

  static CameraIntrinsics default_profile() { return from_geometry(512, 512, 384.0, 1200.0); }

  bool contains(const Vec2& px) const {
    return px.x() >= -0.5 && px.x() <= width - 0.5 && px.y() >= -0.5 && px.y() <= height - 0.5;
  }
};

/// Rigid world-to-camera transform: x_cam = R * x_world + t. The camera
/// looks along +z; the optical center sits at -R^T t in world coordinates.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }

  static CameraPose from_center(const Mat3& rotation, const Vec3& center) {
    CameraPose p;
    p.rotation = rotation;
    p.translation = -rotation * center;
    return p;
  }

  bool is_rigid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

struct Ray {
  Vec3 origin;     // X-ray source position, world mm
  Vec3 direction;  // unit
};

inline Vec2 project(const CameraPose& pose, const CameraIntrinsics& k, const Vec3& point) {
  const Vec3 pc = pose.rotation * point + pose.translation;
  if (pc.z() <= 0.0) throw PointBehindCamera();
  return Vec2(k.focal_px * pc.x() / pc.z() + k.principal_point.x(),
              k.focal_px * pc.y() / pc.z() + k.principal_point.y());
}

/// Z of the point in camera coordinates; callers use it to test visibility
/// without paying for an exception.
inline double camera_depth(const CameraPose& pose, const Vec3& point) {
  return pose.rotation.row(2).dot(point) + pose.translation.z();
}

inline Ray backproject(const CameraPose& pose, const CameraIntrinsics& k, const Vec2& pixel) {
  const Vec3 dir_cam((pixel.x() - k.principal_point.x()) / k.focal_px,
                     (pixel.y() - k.principal_point.y()) / k.focal_px, 1.0);
  Ray r;
  r.origin = pose.center();
  r.direction = (pose.rotation.transpose() * dir_cam).normalized();
  return r;
}

/// |angle| of R_est * R_gt^T in degrees, in [0, 180].
inline double rotation_error_deg(const Mat3& r_est, const Mat3& r_gt) {
  const Mat3 rel = r_est * r_gt.transpose();
  const Eigen::AngleAxisd aa(rel);
  return rad2deg(std::abs(aa.angle()));
}

/// Euclidean distance between the camera centers.
inline double translation_error_mm(const CameraPose& est, const CameraPose& gt) {
  return (est.center() - gt.center()).norm();
}

/// Camera-center difference expressed in the ground-truth camera frame;
/// the z component is the error along the principal axis.
inline Vec3 translation_error_decomposed(const CameraPose& est, const CameraPose& gt) {
  return gt.rotation * (est.center() - gt.center());
}

/// Mean landmark displacement between the two transforms.
inline double tre_mm(const CameraPose& est, const CameraPose& gt, std::span<const Vec3> landmarks) {
  if (landmarks.empty()) throw EmptyLandmarkSet();
  double sum = 0.0;
  for (const Vec3& m : landmarks) {
    sum += ((est.rotation * m + est.translation) - (gt.rotation * m + gt.translation)).norm();
  }
  return sum / static_cast<double>(landmarks.size());
}

enum class PoseSetLabel : int { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

inline const char* to_string(PoseSetLabel l) {
  switch (l) {
    case PoseSetLabel::S1: return "S1";
    case PoseSetLabel::S2: return "S2";
    case PoseSetLabel::S3: return "S3";
    case PoseSetLabel::S4: return "S4";
  }
  return "?";
}

/// Symmetric sampling half-widths for a simulated C-arm sweep around the
/// isocenter (the world origin). The source orbits at orbit_radius_mm.
struct PoseSamplingSpec {
  int count = 20;
  double alpha_deg = 30.0;   // orbital angle, about world y
  double beta_deg = 20.0;    // angulation, about world x
  double roll_deg = 5.0;     // in-plane roll about the principal axis
  double offset_mm = 20.0;   // isocenter offset, per axis
  double orbit_radius_mm = 600.0;
};

struct PoseSet {
  PoseSetLabel label = PoseSetLabel::S1;
  std::uint64_t seed = 0;
  std::vector<CameraPose> poses;

  std::size_t size() const { return poses.size(); }
};

inline Mat3 rot_x(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix(); }

/// Builds one C-arm pose. With all parameters zero this is the canonical
/// AP view: source at (0,0,-orbit_radius), R = I.
inline CameraPose make_carm_pose(double alpha_deg, double beta_deg, double roll_deg,
                                 const Vec3& iso_offset_mm, double orbit_radius_mm) {
  const Mat3 orbit = rot_y(deg2rad(alpha_deg)) * rot_x(deg2rad(beta_deg));
  const Vec3 center = iso_offset_mm + orbit * Vec3(0.0, 0.0, -orbit_radius_mm);
  const Mat3 r = rot_z(deg2rad(roll_deg)) * orbit.transpose();
  return CameraPose::from_center(r, center);
}

/// Pure function of (label, spec, seed); regeneration is bit-identical.
inline PoseSet sample_pose_set(PoseSetLabel label, const PoseSamplingSpec& spec, std::uint64_t seed) {
  if (spec.count < 1 || spec.alpha_deg < 0 || spec.beta_deg < 0 || spec.roll_deg < 0 ||
      spec.offset_mm < 0 || spec.orbit_radius_mm <= 0) {
    throw InvalidSpec("sample_pose_set: invalid sampling spec");
  }
  PoseSet out;
  out.label = label;
  out.seed = seed;
  out.poses.reserve(static_cast<std::size_t>(spec.count));
  const RandomKey key = RandomKey(seed).sub(static_cast<std::uint64_t>(label));
  for (int i = 0; i < spec.count; ++i) {
    const RandomKey k = key.sub(static_cast<std::uint64_t>(i));
    const double alpha = k.uniform(0, -spec.alpha_deg, spec.alpha_deg);
    const double beta = k.uniform(1, -spec.beta_deg, spec.beta_deg);
    const double roll = k.uniform(2, -spec.roll_deg, spec.roll_deg);
    const Vec3 offset(k.uniform(3, -spec.offset_mm, spec.offset_mm),
                      k.uniform(4, -spec.offset_mm, spec.offset_mm),
                      k.uniform(5, -spec.offset_mm, spec.offset_mm));
    out.poses.push_back(make_carm_pose(alpha, beta, roll, offset, spec.orbit_radius_mm));
  }
  return out;
}

}  // namespace xrinit
