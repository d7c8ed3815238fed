#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/detect.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/refine.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(TooFewPoints);
XRINIT_DEFINE_ERROR(DegenerateConfiguration);
XRINIT_DEFINE_ERROR(KTooLarge);
XRINIT_DEFINE_ERROR(NoDetections);
XRINIT_DEFINE_ERROR(NonFiniteResidual);

/// Per-landmark PnP weights; a slot is absent when the landmark was not
/// detected in the query. Present entries are rescaled to mean 1 and
/// population std 0.5 (all ones when the raw weights are constant) and
/// floored at weight_floor.
struct WeightVector {
  std::array<std::optional<double>, kNumLandmarks> w{};

  int n_present() const {
    int n = 0;
    for (const auto& x : w)
      if (x) ++n;
    return n;
  }
};

struct PnPConfig {
  int k_neighbours = 11;
  int lm_max_iter = 200;
  double lm_tolerance = 1e-10;
  double weight_floor = 0.05;
};

/// Indices of the k table entries closest to the query under the mean
/// landmark distance; ties resolve to the lower index.
inline std::vector<int> knn(const Detection2DSet& query, const PoseErrorTable& table, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > table.size()) throw KTooLarge();
  std::vector<std::pair<double, int>> scored;
  scored.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    scored.emplace_back(pose_distance(query, table.detections[i]), static_cast<int>(i));
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = scored[static_cast<std::size_t>(i)].second;
  return out;
}

namespace detail {

inline WeightVector invert_rescale(const std::array<double, kNumLandmarks>& mean_dist,
                                   const std::array<bool, kNumLandmarks>& present,
                                   double weight_floor) {
  WeightVector out;
  std::vector<int> idx;
  std::vector<double> raw;
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (!present[j]) continue;
    double d = mean_dist[static_cast<std::size_t>(j)];
    if (d == 0.0) d = 1.0;  // zero distance counts as one before inverting
    idx.push_back(j);
    raw.push_back(1.0 / d);
  }
  if (idx.empty()) throw NoDetections();

  const double n = static_cast<double>(raw.size());
  double mean = 0.0;
  for (double r : raw) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : raw) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);

  for (std::size_t i = 0; i < raw.size(); ++i) {
    double w = (sd == 0.0) ? 1.0 : 1.0 + 0.5 * (raw[i] - mean) / sd;
    out.w[static_cast<std::size_t>(idx[i])] = std::max(w, weight_floor);
  }
  return out;
}

}  // namespace detail

/// Pose-dependent weights: per detected landmark, the mean of the error
/// table rows for the given neighbours, then inverted and rescaled.
inline WeightVector weights_from_neighbours(const PoseErrorTable& table,
                                            std::span<const int> neighbour_indices,
                                            const std::array<bool, kNumLandmarks>& detected_mask,
                                            double weight_floor = 0.05) {
  if (neighbour_indices.empty()) throw KTooLarge("weights_from_neighbours: no neighbours");
  std::array<double, kNumLandmarks> mean_dist{};
  for (int j = 0; j < kNumLandmarks; ++j) {
    double acc = 0.0;
    for (int i : neighbour_indices) acc += table.distances[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    mean_dist[static_cast<std::size_t>(j)] = acc / static_cast<double>(neighbour_indices.size());
  }
  return detail::invert_rescale(mean_dist, detected_mask, weight_floor);
}

/// Same pipeline with the sample's own per-landmark errors (the oracle
/// upper bound for the weighting scheme).
inline WeightVector ground_truth_weights(const std::array<double, kNumLandmarks>& errors,
                                         const std::array<bool, kNumLandmarks>& detected_mask,
                                         double weight_floor = 0.05) {
  return detail::invert_rescale(errors, detected_mask, weight_floor);
}

/// Direct linear transform from >= 6 correspondences, with Hartley
/// normalization and polar projection of the linear rotation estimate.
inline CameraPose dlt(std::span<const Vec2> points2d, std::span<const Vec3> points3d,
                      const CameraIntrinsics& k) {
  const std::size_t n = points2d.size();
  if (n != points3d.size()) throw Error("dlt: size mismatch");
  if (n < 6) throw TooFewPoints("dlt: need at least 6 correspondences");

  // normalized image coordinates
  std::vector<Vec2> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = Vec2((points2d[i].x() - k.principal_point.x()) / k.focal_px,
                (points2d[i].y() - k.principal_point.y()) / k.focal_px);
  }

  Vec2 c2 = Vec2::Zero();
  for (const auto& p : m) c2 += p;
  c2 /= static_cast<double>(n);
  double s2acc = 0.0;
  for (const auto& p : m) s2acc += (p - c2).norm();
  const double s2 = (s2acc > 0.0) ? std::sqrt(2.0) * n / s2acc : 1.0;

  Vec3 c3 = Vec3::Zero();
  for (const auto& p : points3d) c3 += p;
  c3 /= static_cast<double>(n);
  double s3acc = 0.0;
  for (const auto& p : points3d) s3acc += (p - c3).norm();
  const double s3 = (s3acc > 0.0) ? std::sqrt(3.0) * n / s3acc : 1.0;

  MatX a = MatX::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 x = s2 * (m[i] - c2);
    const Vec3 p = s3 * (points3d[i] - c3);
    const Eigen::Index r = 2 * static_cast<Eigen::Index>(i);
    a.block<1, 3>(r, 0) = p.transpose();
    a(r, 3) = 1.0;
    a.block<1, 3>(r, 8) = -x.x() * p.transpose();
    a(r, 11) = -x.x();
    a.block<1, 3>(r + 1, 4) = p.transpose();
    a(r + 1, 7) = 1.0;
    a.block<1, 3>(r + 1, 8) = -x.y() * p.transpose();
    a(r + 1, 11) = -x.y();
  }

  Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // a second near-zero singular value means the null space is not unique
  // (coplanar points); the solution is then meaningless
  if (sv(10) <= 1e-8 * sv(0)) throw DegenerateConfiguration("dlt: rank-deficient system");
  const VecX p = svd.matrixV().col(11);

  Eigen::Matrix<double, 3, 4> mt;
  mt << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);

  // undo normalization: x_norm = T2 * x, X_norm = T3 * X
  Mat3 t2 = Mat3::Identity();
  t2(0, 0) = s2;
  t2(1, 1) = s2;
  t2(0, 2) = -s2 * c2.x();
  t2(1, 2) = -s2 * c2.y();
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.block<3, 3>(0, 0) = s3 * Mat3::Identity();
  t3.block<3, 1>(0, 3) = -s3 * c3;
  Eigen::Matrix<double, 3, 4> proj = t2.inverse() * mt * t3;

  // majority of the points must land in front of the camera
  int n_front = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = proj.row(2).head<3>().dot(points3d[i]) + proj(2, 3);
    if (z > 0.0) ++n_front;
  }
  if (2 * n_front < static_cast<int>(n)) proj = -proj;

  const Mat3 a33 = proj.block<3, 3>(0, 0);
  Eigen::JacobiSVD<Mat3> polar(a33, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double d = (polar.matrixU() * polar.matrixV().transpose()).determinant();
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = d;
  CameraPose pose;
  pose.rotation = polar.matrixU() * fix * polar.matrixV().transpose();
  const auto& ps = polar.singularValues();
  const double scale = (ps(0) + ps(1) + d * ps(2)) / 3.0;
  if (!(scale > 0.0)) throw DegenerateConfiguration("dlt: non-positive scale");
  pose.translation = proj.col(3) / scale;
  return pose;
}

inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Mat3 s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + s;
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

struct PnPRefineResult {
  CameraPose pose;
  int iterations = 0;
  double final_cost = 0.0;
};

/// Levenberg-Marquardt minimization of the (optionally weighted) squared
/// reprojection error. Weights enter the residuals as sqrt(w); with all
/// weights equal the iterates coincide with the unweighted problem.
/// Rotation updates are left-multiplicative axis-angle increments.
inline PnPRefineResult refine_lm(const CameraPose& pose0, std::span<const Vec2> points2d,
                                 std::span<const Vec3> points3d, const CameraIntrinsics& k,
                                 std::span<const double> weights, const PnPConfig& cfg = {}) {
  const std::size_t n = points2d.size();
  if (n != points3d.size()) throw Error("refine_lm: size mismatch");
  if (n < 4) throw TooFewPoints("refine_lm: need at least 4 correspondences");
  if (!weights.empty() && weights.size() != n) throw Error("refine_lm: weight size mismatch");

  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  auto cost_of = [&](const Mat3& r, const Vec3& t) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = r * points3d[i] + t;
      if (p.z() < 1e-9) return std::numeric_limits<double>::infinity();
      const double u = k.focal_px * p.x() / p.z() + k.principal_point.x();
      const double v = k.focal_px * p.y() / p.z() + k.principal_point.y();
      c += weight(i) * ((u - points2d[i].x()) * (u - points2d[i].x()) +
                        (v - points2d[i].y()) * (v - points2d[i].y()));
    }
    return c;
  };

  Mat3 r = pose0.rotation;
  Vec3 t = pose0.translation;
  double cost = cost_of(r, t);
  if (!std::isfinite(cost)) throw NonFiniteResidual("refine_lm: non-finite residual at start");

  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;

  auto build_normal = [&](const Mat3& rr, const Vec3& tt, Mat6* a, Vec6* g) {
    a->setZero();
    g->setZero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = rr * points3d[i] + tt;
      const double iz = 1.0 / p.z();
      const double u = k.focal_px * p.x() * iz + k.principal_point.x();
      const double v = k.focal_px * p.y() * iz + k.principal_point.y();
      Eigen::Matrix<double, 2, 3> duv_dp;
      duv_dp << k.focal_px * iz, 0.0, -k.focal_px * p.x() * iz * iz,
                0.0, k.focal_px * iz, -k.focal_px * p.y() * iz * iz;
      Mat3 skew;
      skew << 0, -p.z(), p.y(), p.z(), 0, -p.x(), -p.y(), p.x(), 0;
      Eigen::Matrix<double, 2, 6> j;
      j.block<2, 3>(0, 0) = -duv_dp * skew;  // d p / d omega = -[p]x -> sign folds in
      j.block<2, 3>(0, 3) = duv_dp;
      const Vec2 res(u - points2d[i].x(), v - points2d[i].y());
      const double w = weight(i);
      *a += w * j.transpose() * j;
      *g += w * j.transpose() * res;
    }
  };

  Mat6 a;
  Vec6 g;
  build_normal(r, t, &a, &g);
  double lambda = 1e-3 * a.trace() / 6.0;
  if (!(lambda > 0.0)) lambda = 1e-6;

  int iter = 0;
  for (; iter < cfg.lm_max_iter; ++iter) {
    const Mat6 damped = a + lambda * Mat6::Identity();
    const Vec6 delta = damped.ldlt().solve(-g);
    if (!delta.allFinite()) break;
    if (delta.norm() < cfg.lm_tolerance) break;

    const Mat3 dr = so3_exp(delta.head<3>());
    const Mat3 r_new_raw = dr * r;
    const Mat3 r_new = Eigen::Quaterniond(r_new_raw).normalized().toRotationMatrix();
    const Vec3 t_new = dr * t + delta.tail<3>();
    const double cost_new = cost_of(r_new, t_new);

    if (cost_new < cost) {
      r = r_new;
      t = t_new;
      cost = cost_new;
      lambda = std::max(lambda * 0.5, 1e-18);
      build_normal(r, t, &a, &g);
    } else {
      lambda *= 2.0;
      if (lambda > 1e18) break;
    }
  }
  return PnPRefineResult{CameraPose{r, t}, iter, cost};
}

/// Uniform-weight convenience overload.
inline PnPRefineResult refine_lm(const CameraPose& pose0, std::span<const Vec2> points2d,
                                 std::span<const Vec3> points3d, const CameraIntrinsics& k,
                                 const PnPConfig& cfg = {}) {
  return refine_lm(pose0, points2d, points3d, k, std::span<const double>{}, cfg);
}

struct Unweighted {};
struct WeightedFromTable {
  const PoseErrorTable* table = nullptr;
  int k = 11;
};
struct GtWeighted {
  std::array<double, kNumLandmarks> errors{};
};
using PnPWeightSource = std::variant<Unweighted, WeightedFromTable, GtWeighted>;

struct PnPSolution {
  CameraPose pose;
  int iterations = 0;
  double final_cost = 0.0;
  int n_detected = 0;
  std::string mode = "unweighted";
  WeightVector weights;  // empty slots in unweighted mode
};

/// Full solver: DLT on the detected/resolved subset followed by LM
/// refinement with the requested weighting.
inline PnPSolution solve_pnp(const Detection2DSet& detections, const LandmarkSet3D& landmarks3d,
                             const CameraIntrinsics& k, const PnPWeightSource& mode,
                             const PnPConfig& cfg = {}) {
  std::array<bool, kNumLandmarks> usable{};
  std::vector<Vec2> pts2d;
  std::vector<Vec3> pts3d;
  std::vector<int> slots;
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (detections.d[j].missed || !landmarks3d.positions[j]) continue;
    usable[j] = true;
    slots.push_back(j);
    pts2d.push_back(detections.d[j].px);
    pts3d.push_back(*landmarks3d.positions[j]);
  }
  if (pts2d.size() < 6) throw TooFewPoints("solve_pnp: fewer than 6 usable correspondences");

  PnPSolution sol;
  sol.n_detected = static_cast<int>(pts2d.size());

  if (std::holds_alternative<WeightedFromTable>(mode)) {
    const auto& wt = std::get<WeightedFromTable>(mode);
    const auto neighbours = knn(detections, *wt.table, wt.k);
    sol.weights = weights_from_neighbours(*wt.table, neighbours, usable, cfg.weight_floor);
    sol.mode = "weighted";
  } else if (std::holds_alternative<GtWeighted>(mode)) {
    sol.weights = ground_truth_weights(std::get<GtWeighted>(mode).errors, usable, cfg.weight_floor);
    sol.mode = "gt_weighted";
  }

  const CameraPose init = dlt(pts2d, pts3d, k);

  std::vector<double> w;
  if (sol.mode != "unweighted") {
    w.reserve(slots.size());
    for (int j : slots) w.push_back(*sol.weights.w[static_cast<std::size_t>(j)]);
  }
  const PnPRefineResult res = refine_lm(init, pts2d, pts3d, k, w, cfg);
  sol.pose = res.pose;
  sol.iterations = res.iterations;
  sol.final_cost = res.final_cost;
  return sol;
}

}  // namespace xrinit
