#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/rng.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(EmptyMask);
XRINIT_DEFINE_ERROR(EmptySurface);

/// Voxel grid of Hounsfield units. values are x-fastest; voxel (i,j,k) has
/// its center at origin + (i,j,k) .* spacing.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::vector<float> values;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 voxel_center(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
};

/// One bit per voxel; set iff the source HU lies in [hu_lo, hu_hi].
struct BoneMask {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::vector<std::uint8_t> bits;
  double hu_lo = 200.0;
  double hu_hi = 500.0;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  bool is_set(int i, int j, int k) const { return bits[index(i, j, k)] != 0; }
  Vec3 voxel_center(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
};

inline BoneMask bone_mask(const Volume& v, double hu_lo = 200.0, double hu_hi = 500.0) {
  if (!(hu_lo < hu_hi)) throw Error("bone_mask: hu_lo must be < hu_hi");
  BoneMask m;
  m.dims = v.dims;
  m.spacing = v.spacing;
  m.origin = v.origin;
  m.hu_lo = hu_lo;
  m.hu_hi = hu_hi;
  m.bits.resize(v.values.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const float hu = v.values[i];
    m.bits[i] = (hu >= hu_lo && hu <= hu_hi) ? 1 : 0;
  }
  return m;
}

/// Boundary voxel centers of a mask: set voxels with at least one
/// six-connected unset or out-of-bounds neighbor. Keeps the source grid so
/// nearest-point queries can run on a bucket index instead of a linear scan.
struct SurfacePointSet {
  std::vector<Vec3> points;  // voxel centers, world mm, grid iteration order

  // bucket grid: cell (i,j,k) holds the index into points, or -1
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::vector<std::int32_t> cell_point;

  bool empty() const { return points.empty(); }
};

inline SurfacePointSet surface_points(const BoneMask& m) {
  bool any = false;
  for (std::uint8_t b : m.bits) {
    if (b) {
      any = true;
      break;
    }
  }
  if (!any) throw EmptyMask();

  SurfacePointSet s;
  s.dims = m.dims;
  s.spacing = m.spacing;
  s.origin = m.origin;
  s.cell_point.assign(m.bits.size(), -1);

  const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
  auto unset_or_outside = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) return true;
    return !m.is_set(i, j, k);
  };
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        if (!m.is_set(i, j, k)) continue;
        const bool boundary = unset_or_outside(i - 1, j, k) || unset_or_outside(i + 1, j, k) ||
                              unset_or_outside(i, j - 1, k) || unset_or_outside(i, j + 1, k) ||
                              unset_or_outside(i, j, k - 1) || unset_or_outside(i, j, k + 1);
        if (boundary) {
          s.cell_point[m.index(i, j, k)] = static_cast<std::int32_t>(s.points.size());
          s.points.push_back(m.voxel_center(i, j, k));
        }
      }
    }
  }
  return s;
}

namespace detail {

inline bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

}  // namespace detail

/// Exact nearest surface point to p; equidistant candidates resolve to the
/// lexicographically smallest (x,y,z). Expanding Chebyshev ring search over
/// the bucket grid, falling back to a full scan only for far-away queries.
inline Vec3 nearest_surface_point(const Vec3& p, const SurfacePointSet& s) {
  if (s.empty()) throw EmptySurface();

  const int nx = s.dims[0], ny = s.dims[1], nz = s.dims[2];
  const double smin = s.spacing.minCoeff();

  auto cell_center = [&](int i, int j, int k) {
    return Vec3(s.origin.x() + i * s.spacing.x(), s.origin.y() + j * s.spacing.y(),
                s.origin.z() + k * s.spacing.z());
  };

  const Vec3 g = (p - s.origin).cwiseQuotient(s.spacing);
  const int ci = std::clamp(static_cast<int>(std::lround(g.x())), 0, nx - 1);
  const int cj = std::clamp(static_cast<int>(std::lround(g.y())), 0, ny - 1);
  const int ck = std::clamp(static_cast<int>(std::lround(g.z())), 0, nz - 1);
  const double d0 = (p - cell_center(ci, cj, ck)).norm();

  double best_sq = std::numeric_limits<double>::infinity();
  Vec3 best = s.points.front();

  auto consider = [&](int i, int j, int k) {
    const std::int32_t idx = s.cell_point[static_cast<std::size_t>(i) +
                                          static_cast<std::size_t>(nx) *
                                              (static_cast<std::size_t>(j) +
                                               static_cast<std::size_t>(ny) * static_cast<std::size_t>(k))];
    if (idx < 0) return;
    const Vec3& q = s.points[static_cast<std::size_t>(idx)];
    const double dsq = (p - q).squaredNorm();
    if (dsq < best_sq || (dsq == best_sq && detail::lex_less(q, best))) {
      best_sq = dsq;
      best = q;
    }
  };

  const int rmax = std::max({nx, ny, nz});
  for (int r = 0;; ++r) {
    // every cell on ring r is at least r*smin - d0 away from p
    if (best_sq < std::numeric_limits<double>::infinity()) {
      const double bound = r * smin - d0;
      if (bound > 0.0 && bound * bound > best_sq) break;
    }
    if (r > 2 * rmax) break;  // entire grid exhausted
    const int ilo = std::max(0, ci - r), ihi = std::min(nx - 1, ci + r);
    const int jlo = std::max(0, cj - r), jhi = std::min(ny - 1, cj + r);
    const int klo = std::max(0, ck - r), khi = std::min(nz - 1, ck + r);
    for (int k = klo; k <= khi; ++k) {
      const bool kface = (k == ck - r || k == ck + r);
      for (int j = jlo; j <= jhi; ++j) {
        const bool jface = (j == cj - r || j == cj + r);
        if (kface || jface) {
          for (int i = ilo; i <= ihi; ++i) consider(i, j, k);
        } else {
          if (ci - r >= 0) consider(ci - r, j, k);
          if (ci + r <= nx - 1 && r > 0) consider(ci + r, j, k);
        }
      }
    }
  }
  return best;
}

struct NamedLandmark {
  std::string name;
  Vec3 position_mm;
};

inline constexpr int kNumLandmarks = 23;

/// Procedural pelvis-like phantom with 23 named landmarks snapped onto the
/// surface of the [200,500] HU band.
struct Phantom {
  Volume volume;
  std::vector<NamedLandmark> landmarks;  // exactly kNumLandmarks
  std::uint64_t patient_seed = 0;

  std::vector<Vec3> landmark_positions() const {
    std::vector<Vec3> out;
    out.reserve(landmarks.size());
    for (const auto& l : landmarks) out.push_back(l.position_mm);
    return out;
  }
};

namespace detail {

struct BoneShape {
  enum Kind { Sphere, Capsule, Ellipsoid } kind;
  Vec3 a;     // center (sphere/ellipsoid) or segment start (capsule)
  Vec3 b;     // segment end (capsule)
  Vec3 semi;  // ellipsoid semi-axes
  double radius = 0.0;

  // negative inside; ellipsoid distance is the scaled radial excess
  double sdf(const Vec3& p) const {
    switch (kind) {
      case Sphere:
        return (p - a).norm() - radius;
      case Capsule: {
        const Vec3 ab = b - a;
        const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        return (p - (a + t * ab)).norm() - radius;
      }
      case Ellipsoid: {
        const Vec3 q = (p - a).cwiseQuotient(semi);
        return (q.norm() - 1.0) * semi.minCoeff();
      }
    }
    return 0.0;
  }

  // loose bounding sphere for early rejection
  void bounding(Vec3* c, double* r) const {
    switch (kind) {
      case Sphere:
        *c = a;
        *r = radius;
        return;
      case Capsule:
        *c = 0.5 * (a + b);
        *r = 0.5 * (b - a).norm() + radius;
        return;
      case Ellipsoid:
        *c = a;
        *r = semi.maxCoeff();
        return;
    }
  }

  // analytic point on the surface: along unit direction v from the local
  // anchor; capsules take an axial parameter in [0,1]
  Vec3 surface_point(const Vec3& v, double axis_t) const {
    switch (kind) {
      case Sphere:
        return a + radius * v;
      case Capsule: {
        const Vec3 ab = b - a;
        const Vec3 axis = ab.normalized();
        Vec3 perp = v - v.dot(axis) * axis;
        if (perp.norm() < 1e-9) perp = axis.unitOrthogonal();
        return a + axis_t * ab + radius * perp.normalized();
      }
      case Ellipsoid: {
        const double scale = 1.0 / v.cwiseQuotient(semi).norm();
        return a + scale * v;
      }
    }
    return a;
  }
};

struct LandmarkAnchor {
  const char* name;
  int shape;  // index into the bone shape list
  Vec3 dir;
  double axis_t;
};

}  // namespace detail

/// Deterministic 128^3 phantom at 1.5 mm spacing. Soft tissue ~40 HU inside
/// a body ellipsoid, bones built from spheres/capsules/ellipsoid shells:
/// trabecular interior 250 HU, an outer cortical band in [330,450] HU and a
/// dense cortical layer ramping to 1200 HU between them. The seed perturbs
/// every shape parameter by up to +-10%.
inline Phantom make_phantom(std::uint64_t patient_seed) {
  using detail::BoneShape;

  Phantom ph;
  ph.patient_seed = patient_seed;
  Volume& v = ph.volume;
  v.dims = {128, 128, 128};
  v.spacing = Vec3(1.5, 1.5, 1.5);
  // volume center at the world origin
  v.origin = Vec3(-95.25, -95.25, -95.25);
  v.values.assign(v.voxel_count(), -1000.0f);

  const RandomKey key = RandomKey(patient_seed).sub(0xB0D1);
  int param_ctr = 0;
  auto jitter = [&](double x) { return x * (1.0 + 0.1 * key.uniform(static_cast<std::uint64_t>(param_ctr++), -1.0, 1.0)); };
  auto jv = [&](double x, double y, double z) { return Vec3(jitter(x), jitter(y), jitter(z)); };

  const Vec3 body_semi = jv(88.0, 78.0, 66.0);

  std::vector<BoneShape> bones;
  auto sphere = [&](Vec3 c, double r) {
    bones.push_back({BoneShape::Sphere, c, Vec3::Zero(), Vec3::Ones(), jitter(r)});
  };
  auto capsule = [&](Vec3 a, Vec3 b, double r) {
    bones.push_back({BoneShape::Capsule, a, b, Vec3::Ones(), jitter(r)});
  };
  auto ellipsoid = [&](Vec3 c, Vec3 semi) {
    bones.push_back({BoneShape::Ellipsoid, c, Vec3::Zero(), semi, 0.0});
  };

  capsule(jv(0, -10, 30), jv(0, 42, 38), 15.0);                     // 0 sacrum column
  ellipsoid(jv(-43, 26, 10), jv(24, 30, 18));                       // 1 left wing
  ellipsoid(jv(43, 26, 10), jv(24, 30, 18));                        // 2 right wing
  sphere(jv(-40, -26, -8), 16.0);                                   // 3 left head
  sphere(jv(40, -26, -8), 16.0);                                    // 4 right head
  capsule(jv(-40, -26, -8), jv(-58, -62, -4), 9.0);                 // 5 left neck
  capsule(jv(40, -26, -8), jv(58, -62, -4), 9.0);                   // 6 right neck
  capsule(jv(-36, -16, -20), jv(-4, -40, -30), 7.0);                // 7 left ramus
  capsule(jv(36, -16, -20), jv(4, -40, -30), 7.0);                  // 8 right ramus
  sphere(jv(-28, -48, 4), 11.0);                                    // 9 left ischium
  sphere(jv(28, -48, 4), 11.0);                                     // 10 right ischium

  std::vector<Vec3> bcenters(bones.size());
  std::vector<double> bradii(bones.size());
  for (std::size_t i = 0; i < bones.size(); ++i) bones[i].bounding(&bcenters[i], &bradii[i]);

  constexpr double kOuterBand = 2.2;    // mm, HU in [330,450]
  constexpr double kCorticalDepth = 5.5;  // mm, trabecular below this

  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  parallel_for(static_cast<std::size_t>(nz), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const Vec3 p = v.voxel_center(i, j, k);
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t bi = 0; bi < bones.size(); ++bi) {
          const double reject = bradii[bi] + kCorticalDepth + 3.0;
          if ((p - bcenters[bi]).squaredNorm() > reject * reject) continue;
          d = std::min(d, bones[bi].sdf(p));
        }
        float hu;
        if (d > 0.0) {
          const Vec3 q = p.cwiseQuotient(body_semi);
          hu = q.squaredNorm() <= 1.0 ? 40.0f : -1000.0f;
        } else {
          const double depth = -d;
          if (depth >= kCorticalDepth) {
            hu = 250.0f;
          } else if (depth < kOuterBand) {
            hu = static_cast<float>(330.0 + 120.0 * (depth / kOuterBand));
          } else {
            hu = static_cast<float>(700.0 + 500.0 * (depth - kOuterBand) / (kCorticalDepth - kOuterBand));
          }
        }
        v.values[v.index(i, j, k)] = hu;
      }
    }
  }, 1);

  // landmarks: analytic anchors on the shapes, snapped to the band surface
  const std::vector<detail::LandmarkAnchor> anchors = {
      {"l_wing_crest_ant", 1, {-0.25, 0.9, -0.35}, 0},
      {"r_wing_crest_ant", 2, {0.25, 0.9, -0.35}, 0},
      {"l_wing_crest_post", 1, {-0.3, 0.8, 0.5}, 0},
      {"r_wing_crest_post", 2, {0.3, 0.8, 0.5}, 0},
      {"l_wing_lateral", 1, {-1.0, 0.1, -0.1}, 0},
      {"r_wing_lateral", 2, {1.0, 0.1, -0.1}, 0},
      {"l_head_superior", 3, {-0.15, 1.0, -0.1}, 0},
      {"r_head_superior", 4, {0.15, 1.0, -0.1}, 0},
      {"l_head_anterior", 3, {-0.1, 0.0, -1.0}, 0},
      {"r_head_anterior", 4, {0.1, 0.0, -1.0}, 0},
      {"l_neck_lateral", 5, {-1.0, 0.0, -0.3}, 0.5},
      {"r_neck_lateral", 6, {1.0, 0.0, -0.3}, 0.5},
      {"l_ramus_mid", 7, {0.0, -0.4, -1.0}, 0.5},
      {"r_ramus_mid", 8, {0.0, -0.4, -1.0}, 0.5},
      {"arch_apex", 7, {0.3, -0.4, -1.0}, 1.0},
      {"sacrum_top_ant", 0, {0.0, 0.7, -1.0}, 1.0},
      {"sacrum_mid_ant", 0, {0.0, 0.0, -1.0}, 0.45},
      {"l_ischial_tip", 9, {-0.35, -1.0, 0.15}, 0},
      {"r_ischial_tip", 10, {0.35, -1.0, 0.15}, 0},
      {"l_wing_notch", 1, {0.9, -0.45, 0.1}, 0},
      {"r_wing_notch", 2, {-0.9, -0.45, 0.1}, 0},
      {"sacrum_base_post", 0, {0.0, -0.6, 1.0}, 0.0},
      {"arch_inferior", 7, {0.1, -1.0, -0.2}, 0.85},
  };

  const BoneMask mask = bone_mask(v, 200.0, 500.0);
  const SurfacePointSet surf = surface_points(mask);
  ph.landmarks.reserve(anchors.size());
  for (const auto& an : anchors) {
    const Vec3 raw = bones[static_cast<std::size_t>(an.shape)].surface_point(an.dir.normalized(), an.axis_t);
    ph.landmarks.push_back({an.name, nearest_surface_point(raw, surf)});
  }
  return ph;
}

}  // namespace xrinit
