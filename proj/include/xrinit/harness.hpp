#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "xrinit/augment.hpp"
#include "xrinit/common.hpp"
#include "xrinit/detect.hpp"
#include "xrinit/drr.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/io.hpp"
#include "xrinit/pnp.hpp"
#include "xrinit/refine.hpp"
#include "xrinit/registration.hpp"
#include "xrinit/volume.hpp"

namespace xrinit {

inline constexpr int kReportSchemaVersion = 1;

struct DetectorParamsConfig {
  double sigma_lo = 1.0;
  double sigma_hi = 3.5;
  double view_gamma = 2.0;
  double miss_scale = 0.004;
  double confidence_scale = 30.0;
  double retrain_gain = 0.8;
};

struct PoseSpecConfig {
  int count = 20;
  double alpha_deg = 30.0;
  double beta_deg = 20.0;
  double roll_deg = 5.0;
  double offset_mm = 20.0;

  PoseSamplingSpec to_spec() const {
    PoseSamplingSpec s;
    s.count = count;
    s.alpha_deg = alpha_deg;
    s.beta_deg = beta_deg;
    s.roll_deg = roll_deg;
    s.offset_mm = offset_mm;
    return s;
  }
};

struct RegistrationConfig {
  std::string style = "energy_no_log";
  double step_mm = 1.5;
  int downsample_coarse = 4;
  int downsample_fine = 4;
  int evals_translation = 50;
  int evals_rotation = 40;
  int evals_joint = 60;
  double translation_bound_mm = 50.0;
  double rotation_bound_deg = 20.0;
  std::string init_mode = "weighted";

  RegistrationSchedule to_schedule() const {
    RegistrationSchedule s;
    s.translation_bound_mm = translation_bound_mm;
    s.rotation_bound_deg = rotation_bound_deg;
    s.stages = {
        {true, false, 8.0, 0.1, evals_translation, downsample_coarse},
        {false, true, 3.0, 0.05, evals_rotation, downsample_coarse},
        {true, true, 1.5, 0.05, evals_joint, downsample_fine},
    };
    return s;
  }
};

/// Fully determines every artifact byte: all randomness derives from
/// master_seed and the per-phantom patient seeds.
struct ExperimentConfig {
  int schema_version = 1;
  std::vector<std::uint64_t> patient_seeds{1, 2, 3, 4, 5, 6};
  std::uint64_t master_seed = 1234;
  PoseSpecConfig s2{20, 30.0, 20.0, 5.0, 20.0};
  PoseSpecConfig s3{200, 30.0, 20.0, 5.0, 20.0};
  PoseSpecConfig s4{50, 30.0, 20.0, 5.0, 20.0};
  DetectorParamsConfig detector;
  double mu_refine = 0.7;
  double mu_pnp = 0.8;
  double tau_mm = 15.0;
  int k_neighbours = 11;
  double success_threshold_mm = 30.0;
  double hu_lo = 200.0;
  double hu_hi = 500.0;
  bool include_no_retrain = false;
  RegistrationConfig registration;
  std::string output_dir;
  unsigned workers = 0;  // 0 = hardware concurrency
};

inline void to_json(json& j, const PoseSpecConfig& c) {
  j = json{{"count", c.count},       {"alpha_deg", c.alpha_deg}, {"beta_deg", c.beta_deg},
           {"roll_deg", c.roll_deg}, {"offset_mm", c.offset_mm}};
}
inline void from_json(const json& j, PoseSpecConfig& c) {
  c.count = j.value("count", c.count);
  c.alpha_deg = j.value("alpha_deg", c.alpha_deg);
  c.beta_deg = j.value("beta_deg", c.beta_deg);
  c.roll_deg = j.value("roll_deg", c.roll_deg);
  c.offset_mm = j.value("offset_mm", c.offset_mm);
}

inline void to_json(json& j, const DetectorParamsConfig& c) {
  j = json{{"sigma_lo", c.sigma_lo},        {"sigma_hi", c.sigma_hi},
           {"view_gamma", c.view_gamma},    {"miss_scale", c.miss_scale},
           {"confidence_scale", c.confidence_scale}, {"retrain_gain", c.retrain_gain}};
}
inline void from_json(const json& j, DetectorParamsConfig& c) {
  c.sigma_lo = j.value("sigma_lo", c.sigma_lo);
  c.sigma_hi = j.value("sigma_hi", c.sigma_hi);
  c.view_gamma = j.value("view_gamma", c.view_gamma);
  c.miss_scale = j.value("miss_scale", c.miss_scale);
  c.confidence_scale = j.value("confidence_scale", c.confidence_scale);
  c.retrain_gain = j.value("retrain_gain", c.retrain_gain);
}

inline void to_json(json& j, const RegistrationConfig& c) {
  j = json{{"style", c.style},
           {"step_mm", c.step_mm},
           {"downsample_coarse", c.downsample_coarse},
           {"downsample_fine", c.downsample_fine},
           {"evals_translation", c.evals_translation},
           {"evals_rotation", c.evals_rotation},
           {"evals_joint", c.evals_joint},
           {"translation_bound_mm", c.translation_bound_mm},
           {"rotation_bound_deg", c.rotation_bound_deg},
           {"init_mode", c.init_mode}};
}
inline void from_json(const json& j, RegistrationConfig& c) {
  c.style = j.value("style", c.style);
  c.step_mm = j.value("step_mm", c.step_mm);
  c.downsample_coarse = j.value("downsample_coarse", c.downsample_coarse);
  c.downsample_fine = j.value("downsample_fine", c.downsample_fine);
  c.evals_translation = j.value("evals_translation", c.evals_translation);
  c.evals_rotation = j.value("evals_rotation", c.evals_rotation);
  c.evals_joint = j.value("evals_joint", c.evals_joint);
  c.translation_bound_mm = j.value("translation_bound_mm", c.translation_bound_mm);
  c.rotation_bound_deg = j.value("rotation_bound_deg", c.rotation_bound_deg);
  c.init_mode = j.value("init_mode", c.init_mode);
}

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"schema_version", c.schema_version},
           {"patient_seeds", c.patient_seeds},
           {"master_seed", c.master_seed},
           {"s2", c.s2},
           {"s3", c.s3},
           {"s4", c.s4},
           {"detector", c.detector},
           {"mu_refine", c.mu_refine},
           {"mu_pnp", c.mu_pnp},
           {"tau_mm", c.tau_mm},
           {"k_neighbours", c.k_neighbours},
           {"success_threshold_mm", c.success_threshold_mm},
           {"hu_lo", c.hu_lo},
           {"hu_hi", c.hu_hi},
           {"include_no_retrain", c.include_no_retrain},
           {"registration", c.registration},
           {"output_dir", c.output_dir},
           {"workers", c.workers}};
}
inline void from_json(const json& j, ExperimentConfig& c) {
  c.schema_version = j.value("schema_version", c.schema_version);
  c.patient_seeds = j.value("patient_seeds", c.patient_seeds);
  c.master_seed = j.value("master_seed", c.master_seed);
  if (j.contains("s2")) j.at("s2").get_to(c.s2);
  if (j.contains("s3")) j.at("s3").get_to(c.s3);
  if (j.contains("s4")) j.at("s4").get_to(c.s4);
  if (j.contains("detector")) j.at("detector").get_to(c.detector);
  c.mu_refine = j.value("mu_refine", c.mu_refine);
  c.mu_pnp = j.value("mu_pnp", c.mu_pnp);
  c.tau_mm = j.value("tau_mm", c.tau_mm);
  c.k_neighbours = j.value("k_neighbours", c.k_neighbours);
  c.success_threshold_mm = j.value("success_threshold_mm", c.success_threshold_mm);
  c.hu_lo = j.value("hu_lo", c.hu_lo);
  c.hu_hi = j.value("hu_hi", c.hu_hi);
  c.include_no_retrain = j.value("include_no_retrain", c.include_no_retrain);
  if (j.contains("registration")) j.at("registration").get_to(c.registration);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.workers = j.value("workers", c.workers);
}

// ---------------------------------------------------------------------------

struct TrialRow {
  std::uint64_t patient = 0;
  int pose_id = 0;
  std::string mode;
  double translation_error_mm = std::numeric_limits<double>::quiet_NaN();
  double rotation_error_deg = std::numeric_limits<double>::quiet_NaN();
  double tre_mm = std::numeric_limits<double>::quiet_NaN();
  int n_detected = 0;
  bool success = false;
  // camera-frame decomposition of the translation error (gt axes)
  double ex_mm = std::numeric_limits<double>::quiet_NaN();
  double ey_mm = std::numeric_limits<double>::quiet_NaN();
  double ez_mm = std::numeric_limits<double>::quiet_NaN();
  bool ok = true;
  std::string error;
};

struct PatientRefineStats {
  std::uint64_t patient = 0;
  int n_cluster_resolved = 0;
  int n_bone_resolved = 0;
  double mean_cluster_error_mm = std::numeric_limits<double>::quiet_NaN();
  double mean_bone_error_mm = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
  std::vector<TrialRow> rows;
  std::vector<PatientRefineStats> refine_stats;
  json summary;
};

inline std::string report_csv_header() {
  return "patient,pose_id,mode,translation_error_mm,rotation_error_deg,tre_mm,n_detected,success,"
         "ex_mm,ey_mm,ez_mm,ok,error";
}

inline std::string row_to_csv(const TrialRow& r) {
  std::string s;
  s += std::to_string(r.patient);
  s += ',' + std::to_string(r.pose_id);
  s += ',' + r.mode;
  s += ',' + format_double(r.translation_error_mm);
  s += ',' + format_double(r.rotation_error_deg);
  s += ',' + format_double(r.tre_mm);
  s += ',' + std::to_string(r.n_detected);
  s += ',' + std::to_string(r.success ? 1 : 0);
  s += ',' + format_double(r.ex_mm);
  s += ',' + format_double(r.ey_mm);
  s += ',' + format_double(r.ez_mm);
  s += ',' + std::to_string(r.ok ? 1 : 0);
  s += ',' + r.error;
  return s;
}

inline void write_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_report_csv: cannot open " + path);
  f << report_csv_header() << '\n';
  for (const auto& r : report.rows) f << row_to_csv(r) << '\n';
}

namespace detail {

struct Moments {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) {
    m.mean = std::numeric_limits<double>::quiet_NaN();
    m.stddev = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.stddev += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(m.stddev / static_cast<double>(v.size()));
  return m;
}

}  // namespace detail

/// Per-mode aggregates recomputed purely from the rows.
inline json summarize_rows(const std::vector<TrialRow>& rows, double success_threshold_mm) {
  std::map<std::string, std::vector<const TrialRow*>> by_mode;
  for (const auto& r : rows) by_mode[r.mode].push_back(&r);

  json modes = json::object();
  for (const auto& [mode, list] : by_mode) {
    std::vector<double> terr, rerr, tre, aex, aey, aez;
    int n_ok = 0, n_success = 0;
    for (const TrialRow* r : list) {
      if (!r->ok) continue;
      ++n_ok;
      terr.push_back(r->translation_error_mm);
      rerr.push_back(r->rotation_error_deg);
      if (std::isfinite(r->tre_mm)) tre.push_back(r->tre_mm);
      if (std::isfinite(r->ex_mm)) {
        aex.push_back(std::abs(r->ex_mm));
        aey.push_back(std::abs(r->ey_mm));
        aez.push_back(std::abs(r->ez_mm));
      }
      if (r->success) ++n_success;
    }
    const auto mt = detail::moments(terr);
    const auto mr = detail::moments(rerr);
    const auto mtre = detail::moments(tre);
    json m;
    m["n_rows"] = static_cast<int>(list.size());
    m["n_ok"] = n_ok;
    m["translation_error_mm"] = {{"mean", mt.mean}, {"std", mt.stddev}};
    m["rotation_error_deg"] = {{"mean", mr.mean}, {"std", mr.stddev}};
    m["tre_mm"] = {{"mean", mtre.mean}, {"std", mtre.stddev}};
    m["success_rate"] =
        list.empty() ? 0.0 : static_cast<double>(n_success) / static_cast<double>(list.size());
    m["mean_abs_ex_mm"] = detail::moments(aex).mean;
    m["mean_abs_ey_mm"] = detail::moments(aey).mean;
    m["mean_abs_ez_mm"] = detail::moments(aez).mean;
    modes[mode] = m;
  }

  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["success_threshold_mm"] = success_threshold_mm;
  j["modes"] = modes;

  auto mode_mean = [&](const std::string& mode) -> double {
    if (!modes.contains(mode)) return std::numeric_limits<double>::quiet_NaN();
    return modes[mode]["translation_error_mm"]["mean"].get<double>();
  };
  const double un = mode_mean("unweighted");
  json imp = json::object();
  for (const std::string mode : {"weighted", "gt_weighted"}) {
    const double v = mode_mean(mode);
    if (std::isfinite(un) && un > 0.0 && std::isfinite(v))
      imp[mode + "_vs_unweighted_pct"] = 100.0 * (un - v) / un;
  }
  j["translation_improvement"] = imp;
  return j;
}

/// Everything phase 1/2 produce for one phantom; shared by all its trials.
struct PatientContext {
  Phantom phantom;
  LandmarkSet3D original;
  DetectorModel model_pre;    // targets the original landmarks
  DetectorModel model_post;   // retargeted onto the refined bone landmarks
  RefineResult refine;
  PoseErrorTable table;
  PoseSet s4;
  RandomKey trial_key{0};
};

inline PatientContext build_patient_context(const ExperimentConfig& cfg, std::uint64_t patient_seed) {
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  const RandomKey pk = RandomKey(cfg.master_seed).sub(patient_seed);

  PatientContext ctx;
  ctx.phantom = make_phantom(patient_seed);
  ctx.original = LandmarkSet3D::from_phantom(ctx.phantom);

  DetectorModel::Params dp;
  dp.sigma_lo = cfg.detector.sigma_lo;
  dp.sigma_hi = cfg.detector.sigma_hi;
  dp.view_gamma = cfg.detector.view_gamma;
  dp.miss_scale = cfg.detector.miss_scale;
  dp.confidence_scale = cfg.detector.confidence_scale;
  ctx.model_pre = DetectorModel::make(ctx.original.positions, dp, pk.sub(1).raw());

  const PoseSet s2 = sample_pose_set(PoseSetLabel::S2, cfg.s2.to_spec(), pk.sub(2).raw());
  RefineConfig rc;
  rc.tau_mm = cfg.tau_mm;
  rc.hu_lo = cfg.hu_lo;
  rc.hu_hi = cfg.hu_hi;
  ctx.refine = refine_landmarks(ctx.phantom, ctx.model_pre, s2, k, rc, cfg.mu_refine, pk.sub(3).raw());

  ctx.model_post =
      ctx.model_pre.retargeted(ctx.refine.bone.positions, cfg.detector.retrain_gain, pk.sub(4).raw());

  const PoseSet s3 = sample_pose_set(PoseSetLabel::S3, cfg.s3.to_spec(), pk.sub(5).raw());
  ctx.table = build_error_table(ctx.model_post, s3, k, ctx.refine.bone, cfg.mu_pnp, pk.sub(6).raw());

  ctx.s4 = sample_pose_set(PoseSetLabel::S4, cfg.s4.to_spec(), pk.sub(7).raw());
  ctx.trial_key = pk.sub(8);
  return ctx;
}

namespace detail {

inline PatientRefineStats refine_stats_of(const PatientContext& ctx) {
  PatientRefineStats st;
  st.patient = ctx.phantom.patient_seed;
  st.n_cluster_resolved = ctx.refine.cluster.n_resolved();
  st.n_bone_resolved = ctx.refine.bone.n_resolved();
  std::vector<double> ce, be;
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Vec3 truth = ctx.phantom.landmarks[static_cast<std::size_t>(j)].position_mm;
    if (ctx.refine.cluster.positions[j]) ce.push_back((*ctx.refine.cluster.positions[j] - truth).norm());
    if (ctx.refine.bone.positions[j]) be.push_back((*ctx.refine.bone.positions[j] - truth).norm());
  }
  st.mean_cluster_error_mm = moments(ce).mean;
  st.mean_bone_error_mm = moments(be).mean;
  return st;
}

inline TrialRow metrics_row(const ExperimentConfig& cfg, const PatientContext& ctx, int pose_id,
                            const std::string& mode, const CameraPose& est, const CameraPose& gt,
                            int n_detected) {
  TrialRow row;
  row.patient = ctx.phantom.patient_seed;
  row.pose_id = pose_id;
  row.mode = mode;
  row.n_detected = n_detected;
  row.translation_error_mm = translation_error_mm(est, gt);
  row.rotation_error_deg = rotation_error_deg(est.rotation, gt.rotation);
  const std::vector<Vec3> original_pts = ctx.phantom.landmark_positions();
  row.tre_mm = tre_mm(est, gt, original_pts);
  const Vec3 dec = translation_error_decomposed(est, gt);
  row.ex_mm = dec.x();
  row.ey_mm = dec.y();
  row.ez_mm = dec.z();
  row.success = row.translation_error_mm < cfg.success_threshold_mm;
  return row;
}

inline TrialRow failure_row(const PatientContext& ctx, int pose_id, const std::string& mode,
                            const std::string& message) {
  TrialRow row;
  row.patient = ctx.phantom.patient_seed;
  row.pose_id = pose_id;
  row.mode = mode;
  row.ok = false;
  row.success = false;
  row.error = message;
  return row;
}

}  // namespace detail

/// Phase 1+2 once per phantom, then for every test pose the PnP solve in
/// each comparison mode. Trial failures become rows, never aborts.
inline RunReport run_initialization_experiment(const ExperimentConfig& cfg) {
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  RunReport report;

  std::vector<std::string> modes = {"unweighted", "weighted", "gt_weighted", "gt_projections"};
  if (cfg.include_no_retrain) modes.push_back("no_retrain");

  for (std::uint64_t patient_seed : cfg.patient_seeds) {
    const PatientContext ctx = build_patient_context(cfg, patient_seed);
    report.refine_stats.push_back(detail::refine_stats_of(ctx));

    const std::size_t n_trials = ctx.s4.size();
    std::vector<std::vector<TrialRow>> slot(n_trials);

    parallel_for(n_trials, [&](std::size_t ti) {
      const int pose_id = static_cast<int>(ti);
      const CameraPose& gt = ctx.s4.poses[ti];
      const std::uint64_t det_seed = ctx.trial_key.sub(ti).raw();
      const Detection2DSet dets = detect(gt, k, ctx.model_post, DetectorConfig{cfg.mu_pnp}, det_seed);
      const Detection2DSet gt_projs = exact_projections(ctx.refine.bone, gt, k);

      std::array<double, kNumLandmarks> errors{};
      for (int j = 0; j < kNumLandmarks; ++j)
        errors[static_cast<std::size_t>(j)] = landmark_distance(dets.d[j], gt_projs.d[j]);

      PnPConfig pcfg;
      pcfg.k_neighbours = cfg.k_neighbours;

      for (const std::string& mode : modes) {
        try {
          PnPSolution sol;
          if (mode == "unweighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, Unweighted{}, pcfg);
          } else if (mode == "weighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, WeightedFromTable{&ctx.table, cfg.k_neighbours}, pcfg);
          } else if (mode == "gt_weighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, GtWeighted{errors}, pcfg);
          } else if (mode == "gt_projections") {
            sol = solve_pnp(gt_projs, ctx.refine.bone, k, Unweighted{}, pcfg);
          } else {  // no_retrain: pre-trained detector matched to cluster points
            const Detection2DSet nr =
                detect(gt, k, ctx.model_pre, DetectorConfig{cfg.mu_pnp}, det_seed);
            sol = solve_pnp(nr, ctx.refine.cluster, k, Unweighted{}, pcfg);
          }
          slot[ti].push_back(detail::metrics_row(cfg, ctx, pose_id, mode, sol.pose, gt, sol.n_detected));
        } catch (const Error& e) {
          slot[ti].push_back(detail::failure_row(ctx, pose_id, mode, e.what()));
        }
      }
    }, cfg.workers);

    for (auto& rows : slot)
      for (auto& r : rows) report.rows.push_back(std::move(r));
  }

  report.summary = summarize_rows(report.rows, cfg.success_threshold_mm);
  json rs = json::array();
  for (const auto& st : report.refine_stats) {
    rs.push_back(json{{"patient", st.patient},
                      {"n_cluster_resolved", st.n_cluster_resolved},
                      {"n_bone_resolved", st.n_bone_resolved},
                      {"mean_cluster_error_mm", st.mean_cluster_error_mm},
                      {"mean_bone_error_mm", st.mean_bone_error_mm}});
  }
  report.summary["refinement"] = rs;
  return report;
}

/// Initialization trials plus the staged intensity registration started
/// from the configured init mode. "registered" rows report the final pose.
inline RunReport run_registration_experiment(const ExperimentConfig& cfg) {
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  RunReport report;

  const auto style_id = drr_style_from_string(cfg.registration.style);
  if (!style_id) throw Error("run_registration_experiment: unknown style " + cfg.registration.style);

  std::vector<std::string> modes = {"unweighted", "weighted", "gt_weighted", "gt_projections"};
  if (cfg.include_no_retrain) modes.push_back("no_retrain");

  for (std::uint64_t patient_seed : cfg.patient_seeds) {
    const PatientContext ctx = build_patient_context(cfg, patient_seed);
    report.refine_stats.push_back(detail::refine_stats_of(ctx));

    const DrrStyle style{*style_id, cfg.registration.step_mm, 0.02};
    const RegistrationSchedule schedule = cfg.registration.to_schedule();

    const std::size_t n_trials = ctx.s4.size();
    std::vector<std::vector<TrialRow>> slot(n_trials);

    parallel_for(n_trials, [&](std::size_t ti) {
      const int pose_id = static_cast<int>(ti);
      const CameraPose& gt = ctx.s4.poses[ti];
      const std::uint64_t det_seed = ctx.trial_key.sub(ti).raw();
      const Detection2DSet dets = detect(gt, k, ctx.model_post, DetectorConfig{cfg.mu_pnp}, det_seed);
      const Detection2DSet gt_projs = exact_projections(ctx.refine.bone, gt, k);

      std::array<double, kNumLandmarks> errors{};
      for (int j = 0; j < kNumLandmarks; ++j)
        errors[static_cast<std::size_t>(j)] = landmark_distance(dets.d[j], gt_projs.d[j]);

      PnPConfig pcfg;
      pcfg.k_neighbours = cfg.k_neighbours;

      std::optional<PnPSolution> init_solution;
      for (const std::string& mode : modes) {
        try {
          PnPSolution sol;
          if (mode == "unweighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, Unweighted{}, pcfg);
          } else if (mode == "weighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, WeightedFromTable{&ctx.table, cfg.k_neighbours}, pcfg);
          } else if (mode == "gt_weighted") {
            sol = solve_pnp(dets, ctx.refine.bone, k, GtWeighted{errors}, pcfg);
          } else if (mode == "gt_projections") {
            sol = solve_pnp(gt_projs, ctx.refine.bone, k, Unweighted{}, pcfg);
          } else {
            const Detection2DSet nr =
                detect(gt, k, ctx.model_pre, DetectorConfig{cfg.mu_pnp}, det_seed);
            sol = solve_pnp(nr, ctx.refine.cluster, k, Unweighted{}, pcfg);
          }
          if (mode == cfg.registration.init_mode) init_solution = sol;
          slot[ti].push_back(detail::metrics_row(cfg, ctx, pose_id, mode, sol.pose, gt, sol.n_detected));
        } catch (const Error& e) {
          slot[ti].push_back(detail::failure_row(ctx, pose_id, mode, e.what()));
        }
      }

      try {
        if (!init_solution) throw TooFewPoints("no initialization available for registration");
        const Image target = render(ctx.phantom.volume, gt, k, style);
        const CameraPose reg = register_pose(init_solution->pose, target, ctx.phantom.volume, k,
                                             style, schedule);
        slot[ti].push_back(
            detail::metrics_row(cfg, ctx, pose_id, "registered", reg, gt, init_solution->n_detected));
      } catch (const Error& e) {
        slot[ti].push_back(detail::failure_row(ctx, pose_id, "registered", e.what()));
      }
    }, cfg.workers);

    for (auto& rows : slot)
      for (auto& r : rows) report.rows.push_back(std::move(r));
  }

  report.summary = summarize_rows(report.rows, cfg.success_threshold_mm);
  json rs = json::array();
  for (const auto& st : report.refine_stats) {
    rs.push_back(json{{"patient", st.patient},
                      {"n_cluster_resolved", st.n_cluster_resolved},
                      {"n_bone_resolved", st.n_bone_resolved},
                      {"mean_cluster_error_mm", st.mean_cluster_error_mm},
                      {"mean_bone_error_mm", st.mean_bone_error_mm}});
  }
  report.summary["refinement"] = rs;
  return report;
}

enum class SweepParameter { Tau, MuRefine, MuPnp, K };

inline std::optional<SweepParameter> sweep_parameter_from_string(const std::string& s) {
  if (s == "tau") return SweepParameter::Tau;
  if (s == "mu_refine") return SweepParameter::MuRefine;
  if (s == "mu_pnp") return SweepParameter::MuPnp;
  if (s == "k") return SweepParameter::K;
  return std::nullopt;
}

struct SweepEntry {
  double value = 0.0;
  RunReport report;
};

/// Grid evaluation of the initialization experiment over one parameter.
inline std::vector<SweepEntry> run_sweep(const ExperimentConfig& base, SweepParameter param,
                                         const std::vector<double>& values) {
  std::vector<SweepEntry> out;
  for (double v : values) {
    ExperimentConfig cfg = base;
    switch (param) {
      case SweepParameter::Tau: cfg.tau_mm = v; break;
      case SweepParameter::MuRefine: cfg.mu_refine = v; break;
      case SweepParameter::MuPnp: cfg.mu_pnp = v; break;
      case SweepParameter::K: cfg.k_neighbours = static_cast<int>(v); break;
    }
    out.push_back(SweepEntry{v, run_initialization_experiment(cfg)});
  }
  return out;
}

inline std::string sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::Tau: return "tau";
    case SweepParameter::MuRefine: return "mu_refine";
    case SweepParameter::MuPnp: return "mu_pnp";
    case SweepParameter::K: return "k";
  }
  return "?";
}

/// Comparison CSV across sweep values: one row per (value, mode).
inline void write_sweep_csv(const std::vector<SweepEntry>& entries, SweepParameter param,
                            const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_sweep_csv: cannot open " + path);
  f << "parameter,value,mode,mean_translation_error_mm,std_translation_error_mm,"
       "mean_rotation_error_deg,success_rate,n_ok,mean_cluster_error_mm\n";
  for (const auto& e : entries) {
    double mean_cluster = 0.0;
    int n_st = 0;
    for (const auto& st : e.report.refine_stats) {
      if (std::isfinite(st.mean_cluster_error_mm)) {
        mean_cluster += st.mean_cluster_error_mm;
        ++n_st;
      }
    }
    mean_cluster = n_st ? mean_cluster / n_st : std::numeric_limits<double>::quiet_NaN();
    for (const auto& [mode, m] : e.report.summary.at("modes").items()) {
      f << sweep_parameter_name(param) << ',' << format_double(e.value) << ',' << mode << ','
        << format_double(m.at("translation_error_mm").at("mean").get<double>()) << ','
        << format_double(m.at("translation_error_mm").at("std").get<double>()) << ','
        << format_double(m.at("rotation_error_deg").at("mean").get<double>()) << ','
        << format_double(m.at("success_rate").get<double>()) << ',' << m.at("n_ok").get<int>() << ','
        << format_double(mean_cluster) << '\n';
    }
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  ExperimentConfig cfg;
  read_json_file(path).get_to(cfg);
  return cfg;
}

}  // namespace xrinit
