#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "xrinit/drr.hpp"
#include "xrinit/volume.hpp"

using namespace xrinit;

namespace {

const Phantom& shared_phantom() {
  static const Phantom ph = make_phantom(1);
  return ph;
}

Volume uniform_volume(float hu, std::array<int, 3> dims = {32, 32, 32}, double spacing = 2.0) {
  Volume v;
  v.dims = dims;
  v.spacing = Vec3(spacing, spacing, spacing);
  v.origin = Vec3(-spacing * (dims[0] - 1) / 2.0, -spacing * (dims[1] - 1) / 2.0,
                  -spacing * (dims[2] - 1) / 2.0);
  v.values.assign(v.voxel_count(), hu);
  return v;
}

CameraIntrinsics small_intrinsics(int n = 64) {
  return CameraIntrinsics::from_geometry(n, n, 384.0, 1200.0);
}

CameraPose ap_pose() { return make_carm_pose(0, 0, 0, Vec3::Zero(), 600.0); }

}  // namespace

TEST_CASE("line integral of a constant volume matches mu * length") {
  const Volume v = uniform_volume(0.0f);  // mu = mu_water everywhere inside
  Ray r;
  r.origin = Vec3(-200, 0, 0);
  r.direction = Vec3(1, 0, 0);
  const double step = 0.7;
  const double chord = 32.0 * 2.0;  // voxel-boundary box spans dims * spacing
  const double got = line_integral(v, r, step);
  REQUIRE(got == Catch::Approx(0.02 * chord).margin(2.0 * step * 0.02));
}

TEST_CASE("ray missing the volume integrates to zero") {
  const Volume v = uniform_volume(0.0f);
  Ray r;
  r.origin = Vec3(-200, 500, 0);
  r.direction = Vec3(1, 0, 0);
  REQUIRE(line_integral(v, r, 0.5) == 0.0);
}

TEST_CASE("slab integral approximates the analytic value") {
  Volume v = uniform_volume(-1000.0f, {64, 16, 16}, 1.5);
  // 20 voxels of 1000 HU: nominally 30 mm of mu = 2*mu_water material
  for (int k = 0; k < 16; ++k)
    for (int j = 0; j < 16; ++j)
      for (int i = 20; i < 40; ++i) v.values[v.index(i, j, k)] = 1000.0f;
  Ray r;
  r.origin = Vec3(-100, 0, 0);
  r.direction = Vec3(1, 0, 0);
  const double got = line_integral(v, r, 0.25);
  REQUIRE(got == Catch::Approx(2.0 * 0.02 * 30.0).epsilon(0.05));
}

TEST_CASE("all-air volume renders as constant energy image") {
  const Volume v = uniform_volume(-1000.0f);  // mu = 0
  const Image img = render(v, ap_pose(), small_intrinsics(), DrrStyle{DrrStyleId::ENERGY_NO_LOG, 1.0, 0.02});
  for (float p : img.values) REQUIRE(p == 1.0f);

  const Image li = render(v, ap_pose(), small_intrinsics(), DrrStyle{DrrStyleId::LINE_INTEGRAL, 1.0, 0.02});
  for (float p : li.values) REQUIRE(p == 0.0f);
}

TEST_CASE("energy style inverts the rank order of the line integral style") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = small_intrinsics();
  const DrrStyle s_line = DrrStyle::with_default_step(DrrStyleId::LINE_INTEGRAL, ph.volume);
  const DrrStyle s_energy = DrrStyle::with_default_step(DrrStyleId::ENERGY_NO_LOG, ph.volume);
  const Image a = render(ph.volume, ap_pose(), k, s_line);
  const Image b = render(ph.volume, ap_pose(), k, s_energy);

  std::vector<int> order(a.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a.values[i] < a.values[j]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const float prev_a = a.values[order[i - 1]], cur_a = a.values[order[i]];
    const float prev_b = b.values[order[i - 1]], cur_b = b.values[order[i]];
    if (cur_a > prev_a) {
      REQUIRE(cur_b < prev_b);
    } else {
      REQUIRE(cur_b == prev_b);
    }
  }
}

TEST_CASE("bone attenuates more than soft tissue under the energy style") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = CameraIntrinsics::default_profile();
  const Image img = render(ph.volume, ap_pose(), k, DrrStyle::with_default_step(DrrStyleId::ENERGY_NO_LOG, ph.volume));

  // pixel through a femoral head vs pixel through soft tissue only
  const Vec2 bone_px = project(ap_pose(), k, ph.landmarks[6].position_mm);
  const Vec2 soft_px = project(ap_pose(), k, Vec3(0.0, -60.0, 0.0));
  const float bone = img.at(static_cast<int>(bone_px.x()), static_cast<int>(bone_px.y()));
  const float soft = img.at(static_cast<int>(soft_px.x()), static_cast<int>(soft_px.y()));
  REQUIRE(bone < soft);
}

TEST_CASE("rendering is deterministic across worker counts") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = small_intrinsics(32);
  const DrrStyle style = DrrStyle::with_default_step(DrrStyleId::ENERGY_NO_LOG, ph.volume);
  const Image a = render(ph.volume, ap_pose(), k, style, 1);
  const Image b = render(ph.volume, ap_pose(), k, style, 4);
  REQUIRE(a.values == b.values);
}

TEST_CASE("halving the step changes line-integral pixels by less than 1%") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = small_intrinsics();
  const Image coarse = render(ph.volume, ap_pose(), k, DrrStyle{DrrStyleId::LINE_INTEGRAL, 0.75, 0.02});
  const Image fine = render(ph.volume, ap_pose(), k, DrrStyle{DrrStyleId::LINE_INTEGRAL, 0.375, 0.02});
  double worst = 0.0;
  for (std::size_t i = 0; i < coarse.values.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(coarse.values[i]) - fine.values[i]));
  }
  REQUIRE(worst < 0.01);
}

TEST_CASE("all styles normalize into [0,1] with a unit maximum") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = small_intrinsics(32);
  for (DrrStyleId id : {DrrStyleId::LINE_INTEGRAL, DrrStyleId::ENERGY_NO_LOG,
                        DrrStyleId::LOG_CONVERTED, DrrStyleId::HARDENED}) {
    const Image img = render(ph.volume, ap_pose(), k, DrrStyle::with_default_step(id, ph.volume));
    REQUIRE(img.max_value == 1.0f);
    for (float p : img.values) {
      REQUIRE(p >= 0.0f);
      REQUIRE(p <= 1.0f);
    }
    REQUIRE(img.provenance.has_value());
  }
}

TEST_CASE("render pixels agree with backproject + line_integral") {
  const Phantom& ph = shared_phantom();
  const CameraIntrinsics k = small_intrinsics(32);
  const DrrStyle style{DrrStyleId::LINE_INTEGRAL, 0.75, 0.02};
  const Image img = render(ph.volume, ap_pose(), k, style);

  // reconstruct the normalization factor from the raw integrals
  double max_raw = 0.0;
  std::vector<double> raw(img.values.size());
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const Ray r = backproject(ap_pose(), k, Vec2(x, y));
      raw[static_cast<std::size_t>(y) * k.width + x] = line_integral(ph.volume, r, style.step_mm, style.mu_water);
      max_raw = std::max(max_raw, raw[static_cast<std::size_t>(y) * k.width + x]);
    }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    REQUIRE(img.values[i] == Catch::Approx(raw[i] / max_raw).margin(1e-6));
  }
}

TEST_CASE("volume behind the camera is a degenerate pose") {
  const Volume v = uniform_volume(0.0f);
  // camera at -600 z looking away from the volume
  const CameraPose p = CameraPose::from_center(rot_y(kPi), Vec3(0, 0, -600));
  REQUIRE_THROWS_AS(render(v, p, small_intrinsics(), DrrStyle{DrrStyleId::LINE_INTEGRAL, 1.0, 0.02}),
                    DegeneratePose);
}

TEST_CASE("downsample averages blocks") {
  Image img = Image::create(4, 4);
  for (int i = 0; i < 16; ++i) img.values[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const Image half = downsample(img, 2);
  REQUIRE(half.width == 2);
  REQUIRE(half.at(0, 0) == Catch::Approx((0 + 1 + 4 + 5) / 4.0));
  REQUIRE(half.at(1, 1) == Catch::Approx((10 + 11 + 14 + 15) / 4.0));
}
