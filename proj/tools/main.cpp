// Command-line front end: phantom generation, DRR rendering, augmentation,
// landmark refinement, pose-error tables, PnP initialization, intensity
// registration, and the experiment/sweep drivers.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xrinit/augment.hpp"
#include "xrinit/harness.hpp"
#include "xrinit/io.hpp"

namespace fs = std::filesystem;
using namespace xrinit;

namespace {

ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return load_experiment_config(path);
}

void write_refine_outputs(const PatientContext& ctx, const fs::path& out) {
  auto to_named = [&](const LandmarkSet3D& set) {
    std::vector<NamedLandmark> named;
    for (int j = 0; j < kNumLandmarks; ++j) {
      if (!set.positions[j]) continue;
      named.push_back({set.names[j], *set.positions[j]});
    }
    return named;
  };
  write_landmarks_csv(to_named(ctx.refine.cluster), (out / "landmarks_cluster.csv").string());
  write_landmarks_csv(to_named(ctx.refine.bone), (out / "landmarks_bone.csv").string());

  json diag;
  diag["schema_version"] = 1;
  for (int j = 0; j < kNumLandmarks; ++j) {
    json lj;
    lj["name"] = ctx.refine.bone.names[j];
    lj["rays_used"] = ctx.refine.rays_used[j];
    lj["valid_pairs"] = ctx.refine.valid_pairs[j];
    lj["resolved"] = ctx.refine.bone.positions[j].has_value();
    diag["landmarks"].push_back(lj);
  }
  write_json_file(diag, (out / "refine_diagnostics.json").string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xrinit: X-ray/CT registration initialization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", volume_path, pose_path, image_path, init_pose_path;
  std::string style_name = "energy_no_log", mode_name = "weighted", param_name, values_csv;
  std::uint64_t seed = 1;
  int pose_id = 0;
  double step_mm = 0.75;
  bool export_png = false;
  bool with_registration = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--seed", seed, "seed (patient seed for pipeline commands)");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* c_phantom = app.add_subcommand("phantom", "generate a procedural phantom volume + landmarks");
  add_common(c_phantom);

  auto* c_render = app.add_subcommand("render", "render a DRR from a volume");
  add_common(c_render);
  c_render->add_option("--volume", volume_path, "volume sidecar JSON")->required();
  c_render->add_option("--pose", pose_path, "pose JSON (default: canonical AP view)");
  c_render->add_option("--style", style_name, "line_integral|energy_no_log|log_converted|hardened");
  c_render->add_option("--step", step_mm, "ray-march step in mm");
  c_render->add_flag("--png", export_png, "also write an 8-bit PNG");

  auto* c_augment = app.add_subcommand("augment", "apply the randomized post-processing pipeline");
  add_common(c_augment);
  c_augment->add_option("--image", image_path, "image sidecar JSON")->required();
  c_augment->add_flag("--png", export_png, "also write an 8-bit PNG");

  auto* c_refine = app.add_subcommand("refine", "patient-specific landmark refinement");
  add_common(c_refine);

  auto* c_table = app.add_subcommand("table", "build the pose-dependent detector error table");
  add_common(c_table);

  auto* c_init = app.add_subcommand("init", "PnP initialization for one test pose");
  add_common(c_init);
  c_init->add_option("--pose-id", pose_id, "index into the test pose set");
  c_init->add_option("--mode", mode_name, "unweighted|weighted|gt_weighted|gt_projections");

  auto* c_register = app.add_subcommand("register", "intensity-based registration for one test pose");
  add_common(c_register);
  c_register->add_option("--pose-id", pose_id, "index into the test pose set");
  c_register->add_option("--init", init_pose_path, "initial pose JSON (default: weighted PnP)");

  auto* c_experiment = app.add_subcommand("experiment", "run the evaluation benchmark");
  add_common(c_experiment);
  c_experiment->add_flag("--with-registration", with_registration,
                         "follow every initialization with the staged registration");

  auto* c_sweep = app.add_subcommand("sweep", "grid evaluation over one parameter");
  add_common(c_sweep);
  c_sweep->add_option("--param", param_name, "tau|mu_refine|mu_pnp|k")->required();
  c_sweep->add_option("--values", values_csv, "comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    if (c_phantom->parsed()) {
      const Phantom ph = make_phantom(seed);
      write_volume(ph.volume, (out / "phantom.json").string(), (out / "phantom.raw").string());
      write_landmarks_csv(ph.landmarks, (out / "landmarks.csv").string());
      std::cout << "phantom seed " << seed << " -> " << out_dir << "\n";
    } else if (c_render->parsed()) {
      const Volume vol = read_volume(volume_path);
      CameraPose pose = make_carm_pose(0, 0, 0, Vec3::Zero(), 600.0);
      if (!pose_path.empty()) pose = pose_from_json(read_json_file(pose_path));
      const auto style_id = drr_style_from_string(style_name);
      if (!style_id) throw Error("unknown style: " + style_name);
      const Image img = render(vol, pose, CameraIntrinsics::default_profile(),
                               DrrStyle{*style_id, step_mm, 0.02});
      write_image(img, (out / "drr.json").string(), (out / "drr.raw").string());
      if (export_png) write_png(img, (out / "drr.png").string());
      std::cout << "rendered " << img.width << "x" << img.height << " -> " << out_dir << "\n";
    } else if (c_augment->parsed()) {
      const Image img = read_image(image_path);
      AugmentTrace trace;
      const Image aug = augment(img, AugmentConfig{}, seed, &trace);
      write_image(aug, (out / "augmented.json").string(), (out / "augmented.raw").string());
      if (export_png) write_png(aug, (out / "augmented.png").string());
      std::cout << "augment seed " << seed << " gate=" << (trace.outer_applied ? "on" : "off")
                << " -> " << out_dir << "\n";
    } else if (c_refine->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const PatientContext ctx = build_patient_context(cfg, seed);
      write_refine_outputs(ctx, out);
      std::cout << "refined " << ctx.refine.bone.n_resolved() << "/" << kNumLandmarks
                << " landmarks -> " << out_dir << "\n";
    } else if (c_table->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const PatientContext ctx = build_patient_context(cfg, seed);
      write_json_file(error_table_to_json(ctx.table), (out / "error_table.json").string());
      std::cout << "error table with " << ctx.table.size() << " poses -> " << out_dir << "\n";
    } else if (c_init->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const PatientContext ctx = build_patient_context(cfg, seed);
      if (pose_id < 0 || static_cast<std::size_t>(pose_id) >= ctx.s4.size())
        throw Error("pose-id out of range");
      const CameraIntrinsics k = CameraIntrinsics::default_profile();
      const CameraPose& gt = ctx.s4.poses[static_cast<std::size_t>(pose_id)];
      const Detection2DSet dets =
          detect(gt, k, ctx.model_post, DetectorConfig{cfg.mu_pnp}, ctx.trial_key.sub(pose_id).raw());
      const Detection2DSet gt_projs = exact_projections(ctx.refine.bone, gt, k);
      PnPConfig pcfg;
      pcfg.k_neighbours = cfg.k_neighbours;
      PnPSolution sol;
      if (mode_name == "unweighted") {
        sol = solve_pnp(dets, ctx.refine.bone, k, Unweighted{}, pcfg);
      } else if (mode_name == "weighted") {
        sol = solve_pnp(dets, ctx.refine.bone, k, WeightedFromTable{&ctx.table, cfg.k_neighbours}, pcfg);
      } else if (mode_name == "gt_weighted") {
        std::array<double, kNumLandmarks> errors{};
        for (int j = 0; j < kNumLandmarks; ++j)
          errors[static_cast<std::size_t>(j)] = landmark_distance(dets.d[j], gt_projs.d[j]);
        sol = solve_pnp(dets, ctx.refine.bone, k, GtWeighted{errors}, pcfg);
      } else if (mode_name == "gt_projections") {
        sol = solve_pnp(gt_projs, ctx.refine.bone, k, Unweighted{}, pcfg);
      } else {
        throw Error("unknown mode: " + mode_name);
      }
      json j;
      j["pose"] = pose_to_json(sol.pose);
      j["iterations"] = sol.iterations;
      j["final_cost"] = sol.final_cost;
      j["n_detected"] = sol.n_detected;
      j["mode"] = sol.mode;
      j["translation_error_mm"] = translation_error_mm(sol.pose, gt);
      j["rotation_error_deg"] = rotation_error_deg(sol.pose.rotation, gt.rotation);
      write_json_file(j, (out / "init_pose.json").string());
      write_detections_csv(dets, (out / "detections.csv").string());
      std::cout << "init " << mode_name << " pose " << pose_id << ": terr "
                << j["translation_error_mm"].get<double>() << " mm -> " << out_dir << "\n";
    } else if (c_register->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const PatientContext ctx = build_patient_context(cfg, seed);
      if (pose_id < 0 || static_cast<std::size_t>(pose_id) >= ctx.s4.size())
        throw Error("pose-id out of range");
      const CameraIntrinsics k = CameraIntrinsics::default_profile();
      const CameraPose& gt = ctx.s4.poses[static_cast<std::size_t>(pose_id)];
      const auto style_id = drr_style_from_string(cfg.registration.style);
      if (!style_id) throw Error("unknown style: " + cfg.registration.style);
      const DrrStyle style{*style_id, cfg.registration.step_mm, 0.02};

      CameraPose init;
      if (!init_pose_path.empty()) {
        init = pose_from_json(read_json_file(init_pose_path));
      } else {
        const Detection2DSet dets = detect(gt, k, ctx.model_post, DetectorConfig{cfg.mu_pnp},
                                           ctx.trial_key.sub(pose_id).raw());
        PnPConfig pcfg;
        pcfg.k_neighbours = cfg.k_neighbours;
        init = solve_pnp(dets, ctx.refine.bone, k, WeightedFromTable{&ctx.table, cfg.k_neighbours}, pcfg).pose;
      }
      const Image target = render(ctx.phantom.volume, gt, k, style);
      RegiDiagnostics diag;
      const CameraPose reg =
          register_pose(init, target, ctx.phantom.volume, k, style, cfg.registration.to_schedule(), &diag);
      json j;
      j["pose"] = pose_to_json(reg);
      j["translation_error_mm"] = translation_error_mm(reg, gt);
      j["rotation_error_deg"] = rotation_error_deg(reg.rotation, gt.rotation);
      j["tre_mm"] = tre_mm(reg, gt, ctx.phantom.landmark_positions());
      j["diagnostics"] = registration_diagnostics_to_json(diag);
      write_json_file(j, (out / "registered_pose.json").string());
      std::cout << "registered pose " << pose_id << ": terr " << j["translation_error_mm"].get<double>()
                << " mm, tre " << j["tre_mm"].get<double>() << " mm -> " << out_dir << "\n";
    } else if (c_experiment->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const auto start = std::chrono::steady_clock::now();
      const RunReport report =
          with_registration ? run_registration_experiment(cfg) : run_initialization_experiment(cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_report_csv(report, (out / "report.csv").string());
      write_json_file(report.summary, (out / "summary.json").string());
      std::cout << report.rows.size() << " rows in " << secs << " s -> " << out_dir << "\n";
    } else if (c_sweep->parsed()) {
      const ExperimentConfig cfg = load_config_or_default(config_path);
      const auto param = sweep_parameter_from_string(param_name);
      if (!param) throw Error("unknown sweep parameter: " + param_name);
      std::vector<double> values;
      std::size_t pos = 0;
      while (pos < values_csv.size()) {
        std::size_t comma = values_csv.find(',', pos);
        if (comma == std::string::npos) comma = values_csv.size();
        values.push_back(std::stod(values_csv.substr(pos, comma - pos)));
        pos = comma + 1;
      }
      if (values.empty()) throw Error("sweep: no values given");
      const auto entries = run_sweep(cfg, *param, values);
      write_sweep_csv(entries, *param, (out / "sweep.csv").string());
      for (const auto& e : entries) {
        write_json_file(e.report.summary,
                        (out / ("summary_" + sweep_parameter_name(*param) + "_" + format_double(e.value) +
                                ".json")).string());
      }
      std::cout << entries.size() << " sweep points -> " << out_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
