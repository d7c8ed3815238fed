#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "xrinit/volume.hpp"

using namespace xrinit;

namespace {

const Phantom& shared_phantom() {
  static const Phantom ph = make_phantom(1);
  return ph;
}

BoneMask empty_grid(int n) {
  BoneMask m;
  m.dims = {n, n, n};
  m.spacing = Vec3(1, 1, 1);
  m.origin = Vec3(0, 0, 0);
  m.bits.assign(static_cast<std::size_t>(n) * n * n, 0);
  return m;
}

}  // namespace

TEST_CASE("bone mask thresholds the stated band") {
  Volume v;
  v.dims = {3, 1, 1};
  v.values = {300.0f, 100.0f, 600.0f};
  const BoneMask m = bone_mask(v);
  REQUIRE(m.bits[0] == 1);
  REQUIRE(m.bits[1] == 0);
  REQUIRE(m.bits[2] == 0);
  REQUIRE_THROWS_AS(bone_mask(v, 500.0, 200.0), Error);
}

TEST_CASE("surface of a solid 3x3x3 block excludes only the center") {
  BoneMask m = empty_grid(5);
  for (int k = 1; k <= 3; ++k)
    for (int j = 1; j <= 3; ++j)
      for (int i = 1; i <= 3; ++i) m.bits[m.index(i, j, k)] = 1;
  const SurfacePointSet s = surface_points(m);
  REQUIRE(s.points.size() == 26);
  for (const Vec3& p : s.points) {
    REQUIRE_FALSE((p - Vec3(2, 2, 2)).norm() < 1e-12);
  }
}

TEST_CASE("single voxel is its own surface") {
  BoneMask m = empty_grid(4);
  m.bits[m.index(2, 1, 3)] = 1;
  const SurfacePointSet s = surface_points(m);
  REQUIRE(s.points.size() == 1);
  REQUIRE((s.points[0] - Vec3(2, 1, 3)).norm() < 1e-12);
}

TEST_CASE("empty mask raises") {
  BoneMask m = empty_grid(4);
  REQUIRE_THROWS_AS(surface_points(m), EmptyMask);
}

TEST_CASE("digital sphere boundary matches the exhaustive scan") {
  const int n = 25;
  BoneMask m = empty_grid(n);
  const Vec3 c(12, 12, 12);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if ((Vec3(i, j, k) - c).norm() <= 10.0) m.bits[m.index(i, j, k)] = 1;

  const SurfacePointSet s = surface_points(m);
  const int oracle = oracles::count_boundary_voxels(m.bits, n, n, n);
  REQUIRE(std::abs(static_cast<double>(s.points.size()) - oracle) <= 0.05 * oracle);
  REQUIRE(static_cast<int>(s.points.size()) == oracle);
}

TEST_CASE("nearest surface point matches the linear-scan oracle") {
  const RandomKey key(7);
  const int n = 20;
  BoneMask m = empty_grid(n);
  int set = 0;
  for (std::uint64_t i = 0; set < 1000 && i < 40000; ++i) {
    const std::size_t idx = key.below(i, m.bits.size());
    if (!m.bits[idx]) {
      m.bits[idx] = 1;
      ++set;
    }
  }
  const SurfacePointSet s = surface_points(m);

  // a surface point maps to itself
  REQUIRE((nearest_surface_point(s.points[42], s) - s.points[42]).norm() == 0.0);

  const RandomKey qk(8);
  for (int q = 0; q < 500; ++q) {
    const Vec3 p(qk.uniform(3 * static_cast<std::uint64_t>(q), -5.0, 25.0),
                 qk.uniform(3 * static_cast<std::uint64_t>(q) + 1, -5.0, 25.0),
                 qk.uniform(3 * static_cast<std::uint64_t>(q) + 2, -5.0, 25.0));
    const Vec3 got = nearest_surface_point(p, s);
    const Vec3 expect = oracles::linear_scan_nearest(p, s.points);
    REQUIRE(got.x() == expect.x());
    REQUIRE(got.y() == expect.y());
    REQUIRE(got.z() == expect.z());
  }

  SurfacePointSet empty;
  REQUIRE_THROWS_AS(nearest_surface_point(Vec3::Zero(), empty), EmptySurface);
}

TEST_CASE("nearest point at the center of a shell sits at the radius") {
  const int n = 25;
  BoneMask m = empty_grid(n);
  const Vec3 c(12, 12, 12);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double r = (Vec3(i, j, k) - c).norm();
        if (r >= 8.0 && r <= 10.0) m.bits[m.index(i, j, k)] = 1;
      }
  const SurfacePointSet s = surface_points(m);
  const Vec3 nearest = nearest_surface_point(c, s);
  REQUIRE((nearest - c).norm() == Catch::Approx(8.0).margin(0.8));
}

TEST_CASE("phantom generation is deterministic") {
  const Phantom& a = shared_phantom();
  const Phantom b = make_phantom(1);
  REQUIRE(a.volume.values == b.volume.values);
  REQUIRE(a.landmarks.size() == b.landmarks.size());
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    REQUIRE(a.landmarks[i].name == b.landmarks[i].name);
    REQUIRE((a.landmarks[i].position_mm - b.landmarks[i].position_mm).norm() == 0.0);
  }
}

TEST_CASE("phantom has 23 landmarks on the band surface") {
  const Phantom& ph = shared_phantom();
  REQUIRE(static_cast<int>(ph.landmarks.size()) == kNumLandmarks);

  const BoneMask m = bone_mask(ph.volume, 200.0, 500.0);
  const SurfacePointSet s = surface_points(m);
  const double voxel = ph.volume.spacing.maxCoeff();
  for (const auto& l : ph.landmarks) {
    const Vec3 snap = nearest_surface_point(l.position_mm, s);
    REQUIRE((snap - l.position_mm).norm() < voxel);
  }
}

TEST_CASE("different patient seeds move the landmarks") {
  const Phantom& a = shared_phantom();
  const Phantom b = make_phantom(2);
  double max_shift = 0.0;
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    max_shift = std::max(max_shift, (a.landmarks[i].position_mm - b.landmarks[i].position_mm).norm());
  }
  REQUIRE(max_shift > 1.0);
}

TEST_CASE("phantom volume has the documented geometry") {
  const Phantom& ph = shared_phantom();
  REQUIRE(ph.volume.dims == std::array<int, 3>{128, 128, 128});
  REQUIRE(ph.volume.spacing == Vec3(1.5, 1.5, 1.5));
  // volume center at the world origin
  const Vec3 center = ph.volume.origin + 0.5 * 127.0 * ph.volume.spacing;
  REQUIRE(center.norm() < 1e-12);
  // soft tissue below the bones, air outside the body
  REQUIRE(ph.volume.at(63, 24, 63) == 40.0f);
  REQUIRE(ph.volume.at(0, 0, 0) == -1000.0f);
}
