#pragma once

#include <map>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/drr.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/optim.hpp"
#include "xrinit/pnp.hpp"
#include "xrinit/volume.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(ConstantImage);

/// Normalized cross correlation in [-1, 1], accumulated in double.
inline double ncc(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw Error("ncc: image dimensions differ");
  const std::size_t n = a.pixel_count();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw ConstantImage("ncc: constant image");
  return sab / (std::sqrt(saa) * std::sqrt(sbb));
}

/// One optimization stage: which pose components move, the trust radii in
/// the stage's parameter units (mm for translation, degrees for rotation),
/// the evaluation budget, and the similarity downsampling factor.
struct RegiStage {
  bool opt_translation = true;
  bool opt_rotation = true;
  double initial_radius = 8.0;
  double final_radius = 0.05;
  int max_evals = 80;
  int downsample = 1;
};

/// Default: translation only, rotation only, then joint.
struct RegistrationSchedule {
  std::vector<RegiStage> stages;
  double translation_bound_mm = 50.0;
  double rotation_bound_deg = 20.0;

  static RegistrationSchedule standard(int downsample = 1) {
    RegistrationSchedule s;
    s.stages = {
        {true, false, 10.0, 0.05, 70, downsample},
        {false, true, 4.0, 0.02, 60, downsample},
        {true, true, 2.0, 0.02, 90, downsample},
    };
    return s;
  }
};

struct RegiStageDiagnostics {
  int evals = 0;
  double best_ncc = -1.0;
  int downsample = 1;
  CameraPose pose;
};

struct RegiDiagnostics {
  std::vector<RegiStageDiagnostics> stages;
};

namespace detail {

/// Applies a (translation-of-center, axis-angle-in-degrees) perturbation to
/// a base pose.
inline CameraPose perturb_pose(const CameraPose& base, const Vec3& dt_mm, const Vec3& rot_deg) {
  const Vec3 w = rot_deg * (kPi / 180.0);
  const Mat3 r = so3_exp(w) * base.rotation;
  return CameraPose::from_center(r, base.center() + dt_mm);
}

}  // namespace detail

/// Intensity-based refinement: maximizes NCC between the rendered DRR at
/// the current estimate and the target image, stage by stage, warm-starting
/// each stage from the previous result. Parameters are offsets of the
/// camera center (mm) and axis-angle perturbations of the incoming rotation
/// (degrees), bounded by the schedule.
inline CameraPose register_pose(const CameraPose& pose0, const Image& target, const Volume& v,
                                const CameraIntrinsics& k, const DrrStyle& style,
                                const RegistrationSchedule& schedule,
                                RegiDiagnostics* diag = nullptr) {
  CameraPose current = pose0;

  std::map<int, Image> target_by_ds;
  std::map<int, CameraIntrinsics> intr_by_ds;
  auto prepared = [&](int ds) {
    if (!target_by_ds.count(ds)) {
      target_by_ds.emplace(ds, downsample(target, ds));
      CameraIntrinsics kd = k;
      if (ds > 1) {
        kd.width = k.width / ds;
        kd.height = k.height / ds;
        kd.focal_px = k.focal_px / ds;
        // pixel centers: continuous coordinate (u + 0.5)/ds - 0.5
        kd.principal_point = (k.principal_point + Vec2(0.5, 0.5)) / ds - Vec2(0.5, 0.5);
      }
      intr_by_ds.emplace(ds, kd);
    }
  };

  for (const RegiStage& stage : schedule.stages) {
    prepared(stage.downsample);
    const Image& tgt = target_by_ds.at(stage.downsample);
    const CameraIntrinsics& kd = intr_by_ds.at(stage.downsample);

    std::vector<int> param_map;  // 0..2 translation, 3..5 rotation
    if (stage.opt_translation)
      for (int i = 0; i < 3; ++i) param_map.push_back(i);
    if (stage.opt_rotation)
      for (int i = 3; i < 6; ++i) param_map.push_back(i);
    const int np = static_cast<int>(param_map.size());

    const CameraPose base = current;
    auto pose_of = [&](const VecX& p) {
      Vec3 dt = Vec3::Zero(), rot = Vec3::Zero();
      for (int i = 0; i < np; ++i) {
        if (param_map[static_cast<std::size_t>(i)] < 3)
          dt(param_map[static_cast<std::size_t>(i)]) = p(i);
        else
          rot(param_map[static_cast<std::size_t>(i)] - 3) = p(i);
      }
      return detail::perturb_pose(base, dt, rot);
    };

    auto objective = [&](const VecX& p) -> double {
      try {
        const Image drr = render(v, pose_of(p), kd, style);
        return -ncc(drr, tgt);
      } catch (const ConstantImage&) {
        return 1.0;  // worst possible similarity
      } catch (const DegeneratePose&) {
        return 1.0;
      }
    };

    VecX x0 = VecX::Zero(np), lo(np), hi(np);
    for (int i = 0; i < np; ++i) {
      const bool is_t = param_map[static_cast<std::size_t>(i)] < 3;
      lo(i) = is_t ? -schedule.translation_bound_mm : -schedule.rotation_bound_deg;
      hi(i) = is_t ? schedule.translation_bound_mm : schedule.rotation_bound_deg;
    }

    DfoOptions opt;
    opt.initial_radius = stage.initial_radius;
    opt.final_radius = stage.final_radius;
    opt.max_evals = stage.max_evals;
    const DfoResult r = minimize_df(objective, x0, lo, hi, opt);

    current = pose_of(r.x);
    if (diag) {
      diag->stages.push_back(RegiStageDiagnostics{r.evals, -r.f, stage.downsample, current});
    }
  }
  return current;
}

}  // namespace xrinit
