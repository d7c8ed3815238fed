// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavy end-to-end criteria run on the default experiment
// configuration.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "xrinit/augment.hpp"
#include "xrinit/harness.hpp"

using namespace xrinit;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

using CriterionFn = std::function<CriterionResult()>;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

CriterionResult pnp_exactness() {
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  const RandomKey key(2001);
  std::vector<Vec3> pts(kNumLandmarks);
  for (int j = 0; j < kNumLandmarks; ++j) {
    pts[static_cast<std::size_t>(j)] =
        Vec3(key.uniform(3 * static_cast<std::uint64_t>(j), -70.0, 70.0),
             key.uniform(3 * static_cast<std::uint64_t>(j) + 1, -70.0, 70.0),
             key.uniform(3 * static_cast<std::uint64_t>(j) + 2, -70.0, 70.0));
  }
  LandmarkSet3D lms;
  for (int j = 0; j < kNumLandmarks; ++j) {
    lms.positions[j] = pts[static_cast<std::size_t>(j)];
    lms.names[j] = "p" + std::to_string(j);
  }

  const int trials = 1000;
  int good = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < trials; ++t) {
    const CameraPose gt = oracles::random_pose(key, 10000 + static_cast<std::uint64_t>(t));
    Detection2DSet dets;
    for (int j = 0; j < kNumLandmarks; ++j)
      dets.d[j] = Detection{project(gt, k, pts[static_cast<std::size_t>(j)]), 1.0, false};
    const PnPSolution sol = solve_pnp(dets, lms, k, Unweighted{});
    if (translation_error_mm(sol.pose, gt) < 0.1 &&
        rotation_error_deg(sol.pose.rotation, gt.rotation) < 0.01)
      ++good;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ms_per_solve = 1000.0 * secs / trials;
  const double rate = static_cast<double>(good) / trials;

  CriterionResult r;
  r.pass = rate >= 0.999 && ms_per_solve < 10.0;
  std::ostringstream os;
  os << "exact-recovery rate " << rate << " (need >= 0.999), " << ms_per_solve << " ms/solve (need < 10)";
  r.detail = os.str();
  return r;
}

CriterionResult metric_suite() {
  bool ok = true;
  const std::optional<Vec2> missed;
  ok &= landmark_distance(missed, Vec2(100, 200)) == 40.0;
  ok &= landmark_distance(Vec2(100, 200), missed) == 40.0;
  ok &= landmark_distance(missed, missed) == 0.0;
  ok &= landmark_distance(Vec2(0, 0), Vec2(3, 4)) == 5.0;
  const RandomKey key(2002);
  for (int t = 0; t < 1000 && ok; ++t) {
    const RandomKey k = key.sub(static_cast<std::uint64_t>(t));
    const bool mx = k.u01(0) < 0.3, my = k.u01(1) < 0.3;
    const std::optional<Vec2> x = mx ? missed : std::optional<Vec2>(Vec2(k.uniform(2, 0, 511), k.uniform(3, 0, 511)));
    const std::optional<Vec2> y = my ? missed : std::optional<Vec2>(Vec2(k.uniform(4, 0, 511), k.uniform(5, 0, 511)));
    const double d = landmark_distance(x, y);
    ok &= d == landmark_distance(y, x);
    if (mx && my) ok &= d == 0.0;
    else if (mx || my) ok &= d == 40.0;
    else ok &= d == (*x - *y).norm();
  }
  return {ok, ok ? "sentinel combinations, symmetry and Euclidean branch all exact"
                 : "metric mismatch"};
}

CriterionResult weight_laws() {
  const RandomKey key(2003);
  bool laws_ok = true;
  bool scale_ok = true;
  for (int t = 0; t < 1000; ++t) {
    const RandomKey k = key.sub(static_cast<std::uint64_t>(t));
    std::array<double, kNumLandmarks> dists{};
    std::array<bool, kNumLandmarks> mask{};
    int present = 0;
    for (int j = 0; j < kNumLandmarks; ++j) {
      mask[j] = k.u01(static_cast<std::uint64_t>(j)) < 0.85;
      dists[static_cast<std::size_t>(j)] = k.uniform(100 + static_cast<std::uint64_t>(j), 1.0, 40.0);
      if (mask[j]) ++present;
    }
    if (present < 2) continue;

    const WeightVector w = ground_truth_weights(dists, mask);
    double mean = 0.0;
    int n = 0;
    for (const auto& x : w.w)
      if (x) {
        mean += *x;
        ++n;
      }
    mean /= n;
    double var = 0.0;
    for (const auto& x : w.w)
      if (x) var += (*x - mean) * (*x - mean);
    var /= n;
    laws_ok &= std::abs(mean - 1.0) < 1e-9 && std::abs(std::sqrt(var) - 0.5) < 1e-9;

    std::array<double, kNumLandmarks> scaled = dists;
    const double c = k.uniform(999, 0.1, 25.0);
    for (auto& d : scaled) d *= c;
    const WeightVector ws = ground_truth_weights(scaled, mask);
    for (int j = 0; j < kNumLandmarks; ++j) {
      if (!w.w[j]) continue;
      scale_ok &= std::abs(*w.w[j] - *ws.w[j]) < 1e-12;
    }
  }
  // all-equal raw weights collapse to ones
  std::array<double, kNumLandmarks> flat{};
  std::array<bool, kNumLandmarks> mask{};
  for (int j = 0; j < 5; ++j) {
    flat[static_cast<std::size_t>(j)] = 3.0;
    mask[j] = true;
  }
  const WeightVector wf = ground_truth_weights(flat, mask);
  bool flat_ok = true;
  for (int j = 0; j < 5; ++j) flat_ok &= *wf.w[j] == 1.0;

  const bool ok = laws_ok && scale_ok && flat_ok;
  return {ok, std::string("mean-1/std-0.5 law ") + (laws_ok ? "exact" : "VIOLATED") +
                  ", scale invariance " + (scale_ok ? "exact" : "VIOLATED") + ", all-ones fallback " +
                  (flat_ok ? "ok" : "VIOLATED")};
}

CriterionResult weighted_direction() {
  ExperimentConfig cfg;
  cfg.patient_seeds = {1};
  cfg.s4.count = 200;
  cfg.workers = 1;
  const RunReport report = run_initialization_experiment(cfg);

  std::vector<double> un, w, gtw;
  std::map<std::pair<std::uint64_t, int>, double> un_by_trial;
  for (const auto& row : report.rows) {
    if (!row.ok) continue;
    if (row.mode == "unweighted") un.push_back(row.translation_error_mm);
    if (row.mode == "weighted") w.push_back(row.translation_error_mm);
    if (row.mode == "gt_weighted") gtw.push_back(row.translation_error_mm);
  }
  // paired differences (rows are emitted per trial in mode order)
  std::vector<double> diff;
  std::map<int, double> un_map, gtw_map;
  for (const auto& row : report.rows) {
    if (!row.ok) continue;
    if (row.mode == "unweighted") un_map[row.pose_id] = row.translation_error_mm;
    if (row.mode == "gt_weighted") gtw_map[row.pose_id] = row.translation_error_mm;
  }
  for (const auto& [id, ue] : un_map) {
    const auto it = gtw_map.find(id);
    if (it != gtw_map.end()) diff.push_back(ue - it->second);
  }

  const double n = static_cast<double>(diff.size());
  const double dbar = mean_of(diff);
  double sd = 0.0;
  for (double d : diff) sd += (d - dbar) * (d - dbar);
  sd = std::sqrt(sd / (n - 1.0));
  const double tstat = dbar / (sd / std::sqrt(n));
  const double p = oracles::t_test_p_one_sided(tstat, n - 1.0);

  const double mu_un = mean_of(un), mu_w = mean_of(w), mu_gtw = mean_of(gtw);
  const bool ordering = mu_gtw < mu_w && mu_w < mu_un;
  const bool significant = p < 0.01 && mu_gtw < mu_un;

  CriterionResult r;
  r.pass = ordering && significant && diff.size() >= 190;
  std::ostringstream os;
  os << "mean terr mm: gt_weighted " << mu_gtw << " < weighted " << mu_w << " < unweighted " << mu_un
     << " (" << (ordering ? "ordered" : "ORDER VIOLATED") << "), paired t=" << tstat << " p=" << p
     << " over " << diff.size() << " pairs";
  r.detail = os.str();
  return r;
}

CriterionResult refinement_fidelity() {
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  const Phantom ph = make_phantom(1);

  DetectorModel::Params p0;
  p0.sigma_lo = 0.0;
  p0.sigma_hi = 0.0;
  p0.view_gamma = 0.0;
  p0.miss_scale = 0.0;
  const DetectorModel zero = DetectorModel::make(DetectorModel::targets_from(ph.landmark_positions()), p0, 1);

  PoseSamplingSpec spec;
  spec.count = 20;
  const PoseSet s2 = sample_pose_set(PoseSetLabel::S2, spec, 21);
  const RefineResult exact = refine_landmarks(ph, zero, s2, k, RefineConfig{}, 0.7, 31);

  const BoneMask mask = bone_mask(ph.volume, 200.0, 500.0);
  const SurfacePointSet surface = surface_points(mask);

  bool cluster_exact = true, membership = true;
  int resolved = 0;
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (!exact.cluster.positions[j]) continue;
    ++resolved;
    const Vec3 truth = ph.landmarks[static_cast<std::size_t>(j)].position_mm;
    cluster_exact &= (*exact.cluster.positions[j] - truth).norm() < 1e-6;
    bool member = false;
    for (const Vec3& s : surface.points)
      if (s == *exact.bone.positions[j]) {
        member = true;
        break;
      }
    membership &= member;
  }

  DetectorModel::Params p2 = p0;
  p2.sigma_lo = 2.0;
  p2.sigma_hi = 2.0;
  const DetectorModel noisy = DetectorModel::make(DetectorModel::targets_from(ph.landmark_positions()), p2, 1);
  const RefineResult noised = refine_landmarks(ph, noisy, s2, k, RefineConfig{}, 0.7, 32);
  double med_sum = 0.0, ls_sum = 0.0;
  int n = 0;
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (!noised.cluster.positions[j] || noised.rays[j].size() < 2) continue;
    const Vec3 truth = ph.landmarks[static_cast<std::size_t>(j)].position_mm;
    med_sum += (*noised.cluster.positions[j] - truth).norm();
    ls_sum += (oracles::least_squares_triangulation(noised.rays[j]) - truth).norm();
    ++n;
  }
  const bool oracle_ok = n >= 15 && med_sum / n <= 1.5 * (ls_sum / n) + 1e-12;

  CriterionResult r;
  r.pass = cluster_exact && membership && resolved >= 20 && oracle_ok;
  std::ostringstream os;
  os << "zero-noise clusters exact for " << resolved << " resolvable landmarks, surface membership "
     << (membership ? "exact" : "VIOLATED") << "; noisy median error " << (n ? med_sum / n : -1.0)
     << " mm vs 1.5x LS oracle " << (n ? 1.5 * ls_sum / n : -1.0) << " mm";
  r.detail = os.str();
  return r;
}

CriterionResult augmentation_suite() {
  Image img = Image::create(16, 16);
  const RandomKey k(2006);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(k.u01(i));
  img.recompute_max();

  const AugmentConfig cfg;
  bool deterministic = true, identity_ok = true, nonneg = true;
  const Image a = augment(img, cfg, 77);
  const Image b = augment(img, cfg, 77);
  deterministic = a.values == b.values;

  AugmentConfig off = cfg;
  off.outer_gate_prob = 0.0;
  identity_ok = augment(img, off, 5).values == img.values;

  AugmentConfig on = cfg;
  on.outer_gate_prob = 1.0;
  for (std::uint64_t s = 0; s < 300; ++s) {
    AugmentTrace trace;
    augment(img, on, s, &trace);
    for (const auto& [stage, mn] : trace.min_after) nonneg &= mn >= 0.0f;
  }

  Image small = Image::create(4, 4);
  for (std::size_t i = 0; i < small.values.size(); ++i) small.values[i] = static_cast<float>(k.u01(1000 + i));
  small.recompute_max();
  int outer = 0;
  std::array<int, kNumAugmentStages> counts{};
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    AugmentTrace trace;
    augment(small, cfg, static_cast<std::uint64_t>(s), &trace);
    if (trace.outer_applied) ++outer;
    for (int j = 0; j < kNumAugmentStages; ++j)
      if (trace.applied[j]) ++counts[j];
  }
  const double outer_freq = static_cast<double>(outer) / n;
  bool freq_ok = std::abs(outer_freq - 0.5) <= 0.02;
  double worst_stage = 0.0;
  for (int j = 0; j < kNumAugmentStages; ++j) {
    const double f = static_cast<double>(counts[j]) / n;
    worst_stage = std::max(worst_stage, std::abs(f - 0.25));
    freq_ok &= std::abs(f - 0.25) <= 0.02;
  }

  CriterionResult r;
  r.pass = deterministic && identity_ok && nonneg && freq_ok;
  std::ostringstream os;
  os << "determinism " << (deterministic ? "ok" : "VIOLATED") << ", gated identity "
     << (identity_ok ? "ok" : "VIOLATED") << ", non-negativity " << (nonneg ? "ok" : "VIOLATED")
     << ", outer freq " << outer_freq << ", worst stage deviation " << worst_stage << " (need <= 0.02)";
  r.detail = os.str();
  return r;
}

struct BenchmarkOutcome {
  RunReport report;
  double seconds = 0.0;
};

BenchmarkOutcome run_benchmark() {
  const ExperimentConfig cfg;  // shipped defaults: 6 phantoms x 50 poses
  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkOutcome out;
  out.report = run_registration_experiment(cfg);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

CriterionResult end_to_end(const BenchmarkOutcome& bench) {
  const auto& modes = bench.report.summary.at("modes");
  const double init_success = modes.at("weighted").at("success_rate").get<double>();

  // post-registration TRE over registered successes
  std::vector<double> tre;
  for (const auto& row : bench.report.rows) {
    if (row.mode != "registered" || !row.ok || !row.success) continue;
    tre.push_back(row.tre_mm);
  }
  const double mean_tre = mean_of(tre);

  CriterionResult r;
  r.pass = init_success >= 0.85 && !tre.empty() && mean_tre < 5.0 && bench.seconds < 1800.0;
  std::ostringstream os;
  os << "weighted init success rate " << init_success << " (need >= 0.85), post-registration TRE "
     << mean_tre << " mm over " << tre.size() << " successes (need < 5), runtime " << bench.seconds
     << " s single-threaded (need < 1800)";
  r.detail = os.str();
  return r;
}

CriterionResult registration_optimizer() {
  // NCC identities
  Image a = Image::create(32, 32);
  const RandomKey k(2008);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = static_cast<float>(k.u01(i));
  a.recompute_max();
  Image affine = a;
  for (float& v : affine.values) v = 2.0f * v + 0.25f;
  affine.recompute_max();
  Image neg = a;
  for (float& v : neg.values) v = -v;
  const bool ncc_ok = std::abs(ncc(a, a) - 1.0) < 1e-12 && std::abs(ncc(a, affine) - 1.0) < 1e-12 &&
                      std::abs(ncc(a, neg) + 1.0) < 1e-12;

  // registration behavior on phantom seed 1 (the recorded calibration seed)
  const Phantom ph = make_phantom(1);
  const CameraIntrinsics intr = CameraIntrinsics::default_profile();
  const DrrStyle style{DrrStyleId::ENERGY_NO_LOG, 1.5, 0.02};
  const CameraPose gt = make_carm_pose(0, 0, 0, Vec3::Zero(), 600.0);
  const Image target = render(ph.volume, gt, intr, style);
  const RegistrationSchedule schedule = RegistrationConfig{}.to_schedule();

  const CameraPose stay = register_pose(gt, target, ph.volume, intr, style, schedule);
  const double stay_err = translation_error_mm(stay, gt);

  const CameraPose start = CameraPose::from_center(gt.rotation, gt.center() + Vec3(7.0, -7.1, 0.0));
  const CameraPose rec = register_pose(start, target, ph.volume, intr, style, schedule);
  const double rec_err = translation_error_mm(rec, gt);

  CriterionResult r;
  r.pass = ncc_ok && stay_err < 0.5 && rec_err < 1.0;
  std::ostringstream os;
  os << "ncc identities " << (ncc_ok ? "exact" : "VIOLATED") << ", ground-truth start stays within "
     << stay_err << " mm, 10 mm in-plane offset recovered to " << rec_err << " mm (need < 1, seed 1)";
  r.detail = os.str();
  return r;
}

CriterionResult error_decomposition(const BenchmarkOutcome& bench) {
  std::vector<double> ax, ay, az;
  for (const auto& row : bench.report.rows) {
    if (row.mode != "weighted" || !row.ok) continue;
    ax.push_back(std::abs(row.ex_mm));
    ay.push_back(std::abs(row.ey_mm));
    az.push_back(std::abs(row.ez_mm));
  }
  const double mx = mean_of(ax), my = mean_of(ay), mz = mean_of(az);
  CriterionResult r;
  r.pass = !az.empty() && mz > mx && mz > my;
  std::ostringstream os;
  os << "mean |e| along gt camera axes: x " << mx << ", y " << my << ", z " << mz
     << " (principal axis must dominate)";
  r.detail = os.str();
  return r;
}

CriterionResult reproducibility(const BenchmarkOutcome& bench) {
  const BenchmarkOutcome again = run_benchmark();
  bool identical = bench.report.rows.size() == again.report.rows.size();
  if (identical) {
    for (std::size_t i = 0; i < bench.report.rows.size(); ++i) {
      if (row_to_csv(bench.report.rows[i]) != row_to_csv(again.report.rows[i])) {
        identical = false;
        break;
      }
    }
  }
  CriterionResult r;
  r.pass = identical;
  std::ostringstream os;
  os << bench.report.rows.size() << " rows " << (identical ? "byte-identical" : "DIFFER") << " across re-run";
  r.detail = os.str();
  return r;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, CriterionFn>> criteria;
  BenchmarkOutcome bench;  // shared by criteria 7, 9, 10

  criteria.emplace_back("criterion 1: PnP exactness and speed", pnp_exactness);
  criteria.emplace_back("criterion 2: detection distance metric suite", metric_suite);
  criteria.emplace_back("criterion 3: weight construction laws", weight_laws);
  criteria.emplace_back("criterion 4: weighted-PnP improvement direction", weighted_direction);
  criteria.emplace_back("criterion 5: refinement fidelity", refinement_fidelity);
  criteria.emplace_back("criterion 6: augmentation suite", augmentation_suite);
  criteria.emplace_back("criterion 7: end-to-end synthetic benchmark", [&] {
    bench = run_benchmark();
    return end_to_end(bench);
  });
  criteria.emplace_back("criterion 8: registration optimizer", registration_optimizer);
  criteria.emplace_back("criterion 9: principal-axis error dominance", [&] { return error_decomposition(bench); });
  criteria.emplace_back("criterion 10: benchmark reproducibility", [&] { return reproducibility(bench); });

  int failures = 0;
  for (auto& [name, fn] : criteria) {
    CriterionResult res;
    try {
      res = fn();
    } catch (const std::exception& e) {
      res.pass = false;
      res.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %s — %s\n", res.pass ? "PASS" : "FAIL", name.c_str(), res.detail.c_str());
    std::fflush(stdout);
    if (!res.pass) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
