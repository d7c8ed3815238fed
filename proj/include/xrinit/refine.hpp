#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/detect.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/volume.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(TooFewPoses);

enum class LandmarkProvenance { ORIGINAL, CLUSTER, BONE };

inline const char* to_string(LandmarkProvenance p) {
  switch (p) {
    case LandmarkProvenance::ORIGINAL: return "original";
    case LandmarkProvenance::CLUSTER: return "cluster";
    case LandmarkProvenance::BONE: return "bone";
  }
  return "?";
}

/// 23 named landmark slots; a slot without a position is unresolved and is
/// skipped by every downstream consumer.
struct LandmarkSet3D {
  std::array<std::string, kNumLandmarks> names{};
  std::array<std::optional<Vec3>, kNumLandmarks> positions{};
  LandmarkProvenance provenance = LandmarkProvenance::ORIGINAL;

  int n_resolved() const {
    int n = 0;
    for (const auto& p : positions)
      if (p) ++n;
    return n;
  }

  static LandmarkSet3D from_phantom(const Phantom& ph) {
    LandmarkSet3D s;
    s.provenance = LandmarkProvenance::ORIGINAL;
    for (int j = 0; j < kNumLandmarks; ++j) {
      s.names[j] = ph.landmarks[static_cast<std::size_t>(j)].name;
      s.positions[j] = ph.landmarks[static_cast<std::size_t>(j)].position_mm;
    }
    return s;
  }
};

struct RefineConfig {
  double tau_mm = 15.0;      // pair-gap threshold
  int min_rays = 2;
  int min_valid_pairs = 1;
  double parallel_eps = 1e-6;
  double hu_lo = 200.0;
  double hu_hi = 500.0;
};

struct PairMidpoint {
  Vec3 point;
  double gap;
};

/// Closest equidistant point of two lines: the midpoint of their mutual
/// perpendicular feet, plus the line-line distance. Near-parallel pairs
/// (||d1 x d2|| < eps) are degenerate and yield no value.
inline std::optional<PairMidpoint> pair_midpoint(const Ray& r1, const Ray& r2,
                                                 double parallel_eps = 1e-6) {
  const Vec3 cross = r1.direction.cross(r2.direction);
  if (cross.norm() < parallel_eps) return std::nullopt;
  const Vec3 w = r1.origin - r2.origin;
  const double b = r1.direction.dot(r2.direction);
  const double d1w = r1.direction.dot(w);
  const double d2w = r2.direction.dot(w);
  const double denom = 1.0 - b * b;
  const double s = (b * d2w - d1w) / denom;
  const double u = (d2w - b * d1w) / denom;
  const Vec3 p1 = r1.origin + s * r1.direction;
  const Vec3 p2 = r2.origin + u * r2.direction;
  return PairMidpoint{0.5 * (p1 + p2), (p1 - p2).norm()};
}

namespace detail {

inline double median_inplace(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Barycenter of a ray bundle: all pairwise midpoints are computed, pairs
/// with gap > tau or degenerate geometry are discarded, and the result is
/// the per-coordinate median of the survivors. Returns nothing when fewer
/// than min_rays rays or min_valid_pairs surviving pairs are available.
inline std::optional<Vec3> cluster_landmark(std::span<const Ray> rays, const RefineConfig& cfg) {
  if (static_cast<int>(rays.size()) < cfg.min_rays) return std::nullopt;
  std::vector<double> xs, ys, zs;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      const auto mid = pair_midpoint(rays[i], rays[j], cfg.parallel_eps);
      if (!mid || mid->gap > cfg.tau_mm) continue;
      xs.push_back(mid->point.x());
      ys.push_back(mid->point.y());
      zs.push_back(mid->point.z());
    }
  }
  if (static_cast<int>(xs.size()) < cfg.min_valid_pairs) return std::nullopt;
  return Vec3(detail::median_inplace(xs), detail::median_inplace(ys), detail::median_inplace(zs));
}

struct RefineResult {
  LandmarkSet3D cluster;  // ray barycenters
  LandmarkSet3D bone;     // barycenters projected onto the bone surface
  std::array<int, kNumLandmarks> rays_used{};
  std::array<int, kNumLandmarks> valid_pairs{};
  std::array<std::vector<Ray>, kNumLandmarks> rays;  // backprojected detections
};

/// Patient-specific landmark extraction: detect over every pose of the
/// bundle, backproject detections to rays, cluster each landmark, and snap
/// the barycenter to the bone surface of the thresholded volume.
inline RefineResult refine_landmarks(const Phantom& phantom, const DetectorModel& detector,
                                     const PoseSet& s2, const CameraIntrinsics& k,
                                     const RefineConfig& cfg, double mu, std::uint64_t seed) {
  if (s2.size() < 2) throw TooFewPoses("refine_landmarks: need at least 2 poses");

  const DetectorConfig dcfg{mu};
  const RandomKey key = RandomKey(seed).sub(0x2EF);

  std::vector<Detection2DSet> detections(s2.size());
  for (std::size_t i = 0; i < s2.size(); ++i) {
    detections[i] = detect(s2.poses[i], k, detector, dcfg, key.sub(i).raw());
  }

  const BoneMask mask = bone_mask(phantom.volume, cfg.hu_lo, cfg.hu_hi);
  const SurfacePointSet surface = surface_points(mask);

  RefineResult out;
  out.cluster.provenance = LandmarkProvenance::CLUSTER;
  out.bone.provenance = LandmarkProvenance::BONE;
  for (int j = 0; j < kNumLandmarks; ++j) {
    out.cluster.names[j] = phantom.landmarks[static_cast<std::size_t>(j)].name;
    out.bone.names[j] = phantom.landmarks[static_cast<std::size_t>(j)].name;

    std::vector<Ray>& rays = out.rays[j];
    rays.reserve(s2.size());
    for (std::size_t i = 0; i < s2.size(); ++i) {
      const Detection& det = detections[i].d[j];
      if (det.missed) continue;
      rays.push_back(backproject(s2.poses[i], k, det.px));
    }
    out.rays_used[j] = static_cast<int>(rays.size());

    const auto barycenter = cluster_landmark(rays, cfg);
    if (!barycenter) continue;
    out.cluster.positions[j] = *barycenter;
    out.bone.positions[j] = nearest_surface_point(*barycenter, surface);

    // survivor count, for diagnostics
    int pairs = 0;
    for (std::size_t a = 0; a < rays.size(); ++a)
      for (std::size_t b = a + 1; b < rays.size(); ++b) {
        const auto mid = pair_midpoint(rays[a], rays[b], cfg.parallel_eps);
        if (mid && mid->gap <= cfg.tau_mm) ++pairs;
      }
    out.valid_pairs[j] = pairs;
  }
  return out;
}

/// Detector-error statistics over a pose bundle: per pose the detections,
/// the exact target projections, and the per-landmark Eq-style distances
/// between them.
struct PoseErrorTable {
  PoseSet poses;
  std::vector<Detection2DSet> detections;
  std::vector<std::array<double, kNumLandmarks>> distances;

  std::size_t size() const { return distances.size(); }
};

/// Exact projections of a landmark set, encoded as a detection set with
/// confidence 1; slots that are unresolved or out of view are missed.
inline Detection2DSet exact_projections(const LandmarkSet3D& landmarks, const CameraPose& pose,
                                        const CameraIntrinsics& k) {
  Detection2DSet out;
  for (int j = 0; j < kNumLandmarks; ++j) {
    out.d[j] = Detection{};
    if (!landmarks.positions[j]) continue;
    const Vec3& m = *landmarks.positions[j];
    if (camera_depth(pose, m) <= 0.0) continue;
    const Vec2 proj = project(pose, k, m);
    if (!k.contains(proj)) continue;
    out.d[j] = Detection{proj, 1.0, false};
  }
  return out;
}

inline PoseErrorTable build_error_table(const DetectorModel& detector, const PoseSet& s3,
                                        const CameraIntrinsics& k, const LandmarkSet3D& targets,
                                        double mu, std::uint64_t seed) {
  if (s3.size() < 1) throw TooFewPoses("build_error_table: empty pose set");
  const DetectorConfig dcfg{mu};
  const RandomKey key = RandomKey(seed).sub(0x7AB);

  PoseErrorTable table;
  table.poses = s3;
  table.detections.resize(s3.size());
  table.distances.resize(s3.size());
  for (std::size_t i = 0; i < s3.size(); ++i) {
    const Detection2DSet pred = detect(s3.poses[i], k, detector, dcfg, key.sub(i).raw());
    const Detection2DSet truth = exact_projections(targets, s3.poses[i], k);
    table.detections[i] = pred;
    for (int j = 0; j < kNumLandmarks; ++j) {
      table.distances[i][static_cast<std::size_t>(j)] = landmark_distance(pred.d[j], truth.d[j]);
    }
  }
  return table;
}

}  // namespace xrinit
