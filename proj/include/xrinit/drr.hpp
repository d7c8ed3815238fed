#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/geometry.hpp"
#include "xrinit/volume.hpp"

namespace xrinit {

XRINIT_DEFINE_ERROR(DegeneratePose);

enum class DrrStyleId { LINE_INTEGRAL, ENERGY_NO_LOG, LOG_CONVERTED, HARDENED };

inline const char* to_string(DrrStyleId s) {
  switch (s) {
    case DrrStyleId::LINE_INTEGRAL: return "line_integral";
    case DrrStyleId::ENERGY_NO_LOG: return "energy_no_log";
    case DrrStyleId::LOG_CONVERTED: return "log_converted";
    case DrrStyleId::HARDENED: return "hardened";
  }
  return "?";
}

inline std::optional<DrrStyleId> drr_style_from_string(const std::string& s) {
  if (s == "line_integral") return DrrStyleId::LINE_INTEGRAL;
  if (s == "energy_no_log") return DrrStyleId::ENERGY_NO_LOG;
  if (s == "log_converted") return DrrStyleId::LOG_CONVERTED;
  if (s == "hardened") return DrrStyleId::HARDENED;
  return std::nullopt;
}

/// Rendering style: ray-march step and the water attenuation scale used by
/// mu(HU) = mu_water * max(0, 1 + HU/1000) per millimetre.
struct DrrStyle {
  DrrStyleId id = DrrStyleId::ENERGY_NO_LOG;
  double step_mm = 0.75;
  double mu_water = 0.02;

  /// step = half the minimum voxel spacing (validated by the convergence
  /// property tests).
  static DrrStyle with_default_step(DrrStyleId id, const Volume& v, double mu_water = 0.02) {
    return DrrStyle{id, 0.5 * v.spacing.minCoeff(), mu_water};
  }
};

struct ImageProvenance {
  CameraPose pose;
  CameraIntrinsics intrinsics;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, non-negative
  float max_value = 0.0f;
  std::optional<ImageProvenance> provenance;

  static Image create(int width, int height, float fill = 0.0f) {
    Image img;
    img.width = width;
    img.height = height;
    img.values.assign(static_cast<std::size_t>(width) * height, fill);
    img.max_value = fill;
    return img;
  }

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return values.size(); }

  void recompute_max() {
    max_value = 0.0f;
    for (float v : values) max_value = std::max(max_value, v);
  }
};

namespace detail {

/// Marches the ray through the volume in grid coordinates and integrates
/// mu(HU) with the midpoint rule, including the partial final step. Bounds
/// are intersected in double; per-sample interpolation runs in float with
/// the accumulator drained to double every 64 samples.
inline double march_mu(const Volume& v, const Vec3& origin, const Vec3& dir, double step_mm,
                       double mu_water) {
  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];

  // entry/exit of the voxel-boundary box, in world ray parameter t
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = v.origin[a] - 0.5 * v.spacing[a];
    const double hi = v.origin[a] + (v.dims[a] - 0.5) * v.spacing[a];
    const double o = origin[a], d = dir[a];
    if (std::abs(d) < 1e-300) {
      if (o < lo || o > hi) return 0.0;
      continue;
    }
    double ta = (lo - o) / d;
    double tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return 0.0;

  const std::int64_t n_full = static_cast<std::int64_t>((t1 - t0) / step_mm);
  const double tail = (t1 - t0) - n_full * step_mm;

  // grid-space ray
  const Vec3 g0 = (origin - v.origin).cwiseQuotient(v.spacing);
  const Vec3 gd = dir.cwiseQuotient(v.spacing);

  const float* data = v.values.data();
  const int sy = nx;
  const int sz = nx * ny;

  float px = static_cast<float>(g0.x() + (t0 + 0.5 * step_mm) * gd.x());
  float py = static_cast<float>(g0.y() + (t0 + 0.5 * step_mm) * gd.y());
  float pz = static_cast<float>(g0.z() + (t0 + 0.5 * step_mm) * gd.z());
  const float dx = static_cast<float>(step_mm * gd.x());
  const float dy = static_cast<float>(step_mm * gd.y());
  const float dz = static_cast<float>(step_mm * gd.z());

  double acc = 0.0;
  float chunk_acc = 0.0f;
  int chunk = 0;
  for (std::int64_t i = 0; i < n_full; ++i) {
    int ix = std::clamp(static_cast<int>(px), 0, nx - 2);
    int iy = std::clamp(static_cast<int>(py), 0, ny - 2);
    int iz = std::clamp(static_cast<int>(pz), 0, nz - 2);
    const float fx = std::clamp(px - ix, 0.0f, 1.0f);
    const float fy = std::clamp(py - iy, 0.0f, 1.0f);
    const float fz = std::clamp(pz - iz, 0.0f, 1.0f);
    const float* b = data + ix + sy * iy + sz * iz;
    const float c00 = b[0] + fx * (b[1] - b[0]);
    const float c10 = b[sy] + fx * (b[sy + 1] - b[sy]);
    const float c01 = b[sz] + fx * (b[sz + 1] - b[sz]);
    const float c11 = b[sz + sy] + fx * (b[sz + sy + 1] - b[sz + sy]);
    const float c0 = c00 + fy * (c10 - c00);
    const float c1 = c01 + fy * (c11 - c01);
    const float hu = c0 + fz * (c1 - c0);
    chunk_acc += std::max(0.0f, 1.0f + hu * 1e-3f);
    px += dx;
    py += dy;
    pz += dz;
    if (++chunk == 64) {
      acc += chunk_acc;
      chunk_acc = 0.0f;
      chunk = 0;
    }
  }
  acc = (acc + chunk_acc) * step_mm;

  if (tail > 0.0) {
    const double t = t0 + n_full * step_mm + 0.5 * tail;
    const double gx = g0.x() + t * gd.x();
    const double gy = g0.y() + t * gd.y();
    const double gz = g0.z() + t * gd.z();
    const int ix = std::clamp(static_cast<int>(gx), 0, nx - 2);
    const int iy = std::clamp(static_cast<int>(gy), 0, ny - 2);
    const int iz = std::clamp(static_cast<int>(gz), 0, nz - 2);
    const double fx = std::clamp(gx - ix, 0.0, 1.0);
    const double fy = std::clamp(gy - iy, 0.0, 1.0);
    const double fz = std::clamp(gz - iz, 0.0, 1.0);
    const float* b = data + ix + sy * iy + sz * iz;
    const double c00 = b[0] + fx * (b[1] - b[0]);
    const double c10 = b[sy] + fx * (b[sy + 1] - b[sy]);
    const double c01 = b[sz] + fx * (b[sz + 1] - b[sz]);
    const double c11 = b[sz + sy] + fx * (b[sz + sy + 1] - b[sz + sy]);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    const double hu = c0 + fz * (c1 - c0);
    acc += std::max(0.0, 1.0 + hu * 1e-3) * tail;
  }
  return acc * mu_water;
}

}  // namespace detail

/// Integral of mu(HU) along the ray inside the volume; 0 if the ray misses.
inline double line_integral(const Volume& v, const Ray& ray, double step_mm,
                            double mu_water = 0.02) {
  if (!(step_mm > 0.0)) throw Error("line_integral: step_mm must be > 0");
  return detail::march_mu(v, ray.origin, ray.direction, step_mm, mu_water);
}

/// Raycast DRR. Deterministic: identical inputs give bit-identical images
/// regardless of worker count. The result is normalized to [0,1] and
/// carries (pose, intrinsics) provenance.
inline Image render(const Volume& v, const CameraPose& pose, const CameraIntrinsics& k,
                    const DrrStyle& style, unsigned workers = 1) {
  if (!(style.step_mm > 0.0)) throw Error("render: step_mm must be > 0");

  // reject views with the whole volume behind the source
  {
    bool any_front = false;
    for (int c = 0; c < 8 && !any_front; ++c) {
      const Vec3 corner(v.origin.x() + ((c & 1) ? (v.dims[0] - 1) * v.spacing.x() : 0.0),
                        v.origin.y() + ((c & 2) ? (v.dims[1] - 1) * v.spacing.y() : 0.0),
                        v.origin.z() + ((c & 4) ? (v.dims[2] - 1) * v.spacing.z() : 0.0));
      any_front = camera_depth(pose, corner) > 0.0;
    }
    if (!any_front) throw DegeneratePose("render: volume entirely behind the camera");
  }

  Image img = Image::create(k.width, k.height);
  const Vec3 src = pose.center();
  const Mat3 rt = pose.rotation.transpose();

  parallel_for(static_cast<std::size_t>(k.height), [&](std::size_t row) {
    // same arithmetic as backproject() so the two paths agree bit-for-bit
    const double yc = (static_cast<double>(row) - k.principal_point.y()) / k.focal_px;
    float* out = img.values.data() + row * static_cast<std::size_t>(k.width);
    for (int col = 0; col < k.width; ++col) {
      const double xc = (static_cast<double>(col) - k.principal_point.x()) / k.focal_px;
      const Vec3 dir = (rt * Vec3(xc, yc, 1.0)).normalized();
      const double raw = detail::march_mu(v, src, dir, style.step_mm, style.mu_water);
      double val;
      switch (style.id) {
        case DrrStyleId::LINE_INTEGRAL:
        case DrrStyleId::LOG_CONVERTED:
          val = raw;
          break;
        case DrrStyleId::ENERGY_NO_LOG:
          val = std::exp(-raw);
          break;
        case DrrStyleId::HARDENED:
          val = 0.5 * std::exp(-raw) + 0.5 * std::exp(-0.5 * raw);
          break;
        default:
          val = raw;
      }
      out[col] = static_cast<float>(val);
    }
  }, workers);

  img.recompute_max();
  if (img.max_value > 0.0f) {
    const float inv = 1.0f / img.max_value;
    for (float& p : img.values) p *= inv;
    img.recompute_max();
  }
  img.provenance = ImageProvenance{pose, k};
  return img;
}

/// Box-average downsample by an integer factor (width/height must divide).
inline Image downsample(const Image& img, int factor) {
  if (factor <= 1) return img;
  if (img.width % factor != 0 || img.height % factor != 0)
    throw Error("downsample: factor must divide image dimensions");
  Image out = Image::create(img.width / factor, img.height / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy);
      out.at(x, y) = static_cast<float>(acc * inv);
    }
  }
  out.recompute_max();
  out.provenance = img.provenance;
  return out;
}

}  // namespace xrinit
