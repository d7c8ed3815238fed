#pragma once

#include <array>
#include <optional>

#include "xrinit/common.hpp"
#include "xrinit/drr.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/rng.hpp"
#include "xrinit/volume.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(MissingProvenance);

/// Per-landmark 2D detector output. A missed landmark serializes as the
/// sentinel (-1,-1) with confidence 0.
struct Detection {
  Vec2 px{-1.0, -1.0};
  double confidence = 0.0;
  bool missed = true;

  std::optional<Vec2> location() const {
    if (missed) return std::nullopt;
    return px;
  }
};

struct Detection2DSet {
  std::array<Detection, kNumLandmarks> d{};

  int n_detected() const {
    int n = 0;
    for (const auto& x : d)
      if (!x.missed) ++n;
    return n;
  }
  std::array<bool, kNumLandmarks> detected_mask() const {
    std::array<bool, kNumLandmarks> m{};
    for (int i = 0; i < kNumLandmarks; ++i) m[i] = !d[i].missed;
    return m;
  }
};

struct DetectorConfig {
  double mu = 0.8;  // confidence threshold
};

/// Penalty distance assigned when exactly one side of a correspondence is
/// missed.
inline constexpr double kMissPenaltyPx = 40.0;

/// Distance between two detector outputs: the miss penalty if exactly one
/// is missed, 0 if both are missed, Euclidean otherwise.
inline double landmark_distance(const std::optional<Vec2>& x, const std::optional<Vec2>& y) {
  const bool mx = !x.has_value(), my = !y.has_value();
  if (mx && my) return 0.0;
  if (mx != my) return kMissPenaltyPx;
  return (*x - *y).norm();
}

inline double landmark_distance(const Detection& x, const Detection& y) {
  return landmark_distance(x.location(), y.location());
}

/// Mean landmark distance over all 23 slots.
inline double pose_distance(const Detection2DSet& a, const Detection2DSet& b);

/// Synthetic stand-in for a learned landmark detector. Detection error is
/// Gaussian with a per-landmark base jitter inflated when the viewing
/// direction is far from the landmark's difficulty axis, which makes
/// accuracy pose-dependent. Confidence decays with the effective jitter.
struct DetectorModel {
  std::array<std::optional<Vec3>, kNumLandmarks> targets{};
  std::array<double, kNumLandmarks> sigma_px{};
  std::array<Vec3, kNumLandmarks> difficulty_axis{};
  double view_gamma = 2.0;
  double miss_scale = 0.0;
  double confidence_scale = 30.0;

  struct Params {
    double sigma_lo = 1.0;
    double sigma_hi = 3.5;
    double view_gamma = 2.0;
    double miss_scale = 0.004;
    double confidence_scale = 30.0;
  };

  /// Draws per-landmark jitters (log-uniform in [sigma_lo, sigma_hi]) and
  /// difficulty axes from the model seed.
  static DetectorModel make(const std::array<std::optional<Vec3>, kNumLandmarks>& targets,
                            const Params& p, std::uint64_t model_seed) {
    DetectorModel m;
    m.targets = targets;
    m.view_gamma = p.view_gamma;
    m.miss_scale = p.miss_scale;
    m.confidence_scale = p.confidence_scale;
    const RandomKey key = RandomKey(model_seed).sub(0xDE7);
    for (int j = 0; j < kNumLandmarks; ++j) {
      const RandomKey kj = key.sub(static_cast<std::uint64_t>(j));
      if (p.sigma_lo <= 0.0 && p.sigma_hi <= 0.0) {
        m.sigma_px[j] = 0.0;
      } else {
        const double lo = std::max(p.sigma_lo, 1e-6);
        m.sigma_px[j] = lo * std::exp(kj.u01(0) * std::log(std::max(p.sigma_hi, lo) / lo));
      }
      Vec3 a(kj.normal(1), kj.normal(2), kj.normal(3));
      if (a.norm() < 1e-12) a = Vec3::UnitZ();
      m.difficulty_axis[j] = a.normalized();
    }
    return m;
  }

  static std::array<std::optional<Vec3>, kNumLandmarks> targets_from(const std::vector<Vec3>& pts) {
    std::array<std::optional<Vec3>, kNumLandmarks> t{};
    for (int j = 0; j < kNumLandmarks && j < static_cast<int>(pts.size()); ++j) t[j] = pts[j];
    return t;
  }

  /// Rebinds the model to a new landmark set with freshly drawn jitters
  /// scaled by retrain_gain (< 1 models the accuracy gain of retraining on
  /// patient-specific data).
  DetectorModel retargeted(const std::array<std::optional<Vec3>, kNumLandmarks>& new_targets,
                           double retrain_gain, std::uint64_t retrain_seed) const {
    Params p;
    p.view_gamma = view_gamma;
    p.miss_scale = miss_scale;
    p.confidence_scale = confidence_scale;
    // reuse the original draw range, scaled
    double lo = sigma_px[0], hi = sigma_px[0];
    for (double s : sigma_px) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    p.sigma_lo = retrain_gain * lo;
    p.sigma_hi = retrain_gain * hi;
    return make(new_targets, p, retrain_seed);
  }
};

/// Simulated inference for one pose. Deterministic per
/// (pose, seed, landmark index): the noise stream is keyed on the pose's
/// bit pattern, so equal poses always reproduce the same detections.
inline Detection2DSet detect(const CameraPose& pose, const CameraIntrinsics& k,
                             const DetectorModel& model, const DetectorConfig& cfg,
                             std::uint64_t seed) {
  RandomKey key = RandomKey(seed).sub(0xD37);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) key = key.sub_double(pose.rotation(r, c));
  for (int i = 0; i < 3; ++i) key = key.sub_double(pose.translation(i));

  const Vec3 center = pose.center();
  Detection2DSet out;
  for (int j = 0; j < kNumLandmarks; ++j) {
    Detection& det = out.d[j];
    det = Detection{};  // missed by default
    if (!model.targets[j]) continue;
    const Vec3& m = *model.targets[j];
    if (camera_depth(pose, m) <= 0.0) continue;
    const Vec2 proj = project(pose, k, m);
    if (!k.contains(proj)) continue;

    const Vec3 view_dir = (m - center).normalized();
    const double align = std::abs(view_dir.dot(model.difficulty_axis[j]));
    const double sigma_eff = model.sigma_px[j] * (1.0 + model.view_gamma * (1.0 - align));

    const RandomKey kj = key.sub(static_cast<std::uint64_t>(j));
    const Vec2 loc = proj + sigma_eff * Vec2(kj.normal(0), kj.normal(1));
    const double confidence = std::exp(-sigma_eff / model.confidence_scale);

    if (confidence < cfg.mu) continue;
    if (!k.contains(loc)) continue;
    if (model.miss_scale > 0.0 && kj.u01(10) < std::min(1.0, model.miss_scale * sigma_eff)) continue;

    det.px = loc;
    det.confidence = confidence;
    det.missed = false;
  }
  return out;
}

/// Image-facing entry point with the same contract as detect(); the
/// simulated detector reads the pose from the image's provenance, so a
/// learned detector can replace it without changing callers.
inline Detection2DSet detect_on_image(const Image& img, const DetectorModel& model,
                                      const DetectorConfig& cfg, std::uint64_t seed) {
  if (!img.provenance) throw MissingProvenance("detect_on_image: image has no pose provenance");
  return detect(img.provenance->pose, img.provenance->intrinsics, model, cfg, seed);
}

inline double pose_distance(const Detection2DSet& a, const Detection2DSet& b) {
  double sum = 0.0;
  for (int j = 0; j < kNumLandmarks; ++j) sum += landmark_distance(a.d[j], b.d[j]);
  return sum / static_cast<double>(kNumLandmarks);
}

}  // namespace xrinit
