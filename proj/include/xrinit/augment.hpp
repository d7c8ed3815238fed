#pragma once

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "xrinit/common.hpp"
#include "xrinit/drr.hpp"
#include "xrinit/rng.hpp"

namespace xrinit {

/// Randomized post-processing for DRRs. Interval parameters are fractions
/// of the image maximum (or of the pixel count for salt & pepper). The
/// asymmetric defaults are intentional: they skew outputs darker.
struct AugmentConfig {
  double outer_gate_prob = 0.5;
  double stage_prob = 0.5;

  double offset_lo = -0.20, offset_hi = 0.15;
  double linear_scale_lo = 0.8, linear_scale_hi = 1.15;
  double renorm_lo_lo = -0.04, renorm_lo_hi = 0.02;
  double renorm_hi_lo = 0.90, renorm_hi_hi = 1.05;
  double sin_offset_ab_lo = 0.9, sin_offset_ab_hi = 1.05;
  double sin_offset_c_lo = -0.4, sin_offset_c_hi = 0.4;
  double salt_pepper_lo = 0.02, salt_pepper_hi = 0.04;
  double gauss_mean_lo = -0.15, gauss_mean_hi = 0.10;
  double gaussian_std_frac = 0.05;
  double poisson_scale = 255.0;
  double sin_scale_ab_lo = 0.8, sin_scale_ab_hi = 1.1;
  double sin_scale_c_lo = -0.5, sin_scale_c_hi = 0.5;
};

constexpr int kNumAugmentStages = 9;

struct AugmentTrace {
  bool outer_applied = false;
  std::array<int, kNumAugmentStages> order{};
  std::array<bool, kNumAugmentStages> applied{};
  std::vector<std::pair<int, float>> min_after;  // (stage id, min after clamp)
};

namespace detail {

inline void box_filter(Image& img, int radius) {
  // separable box with replicated borders, so constants stay constant
  const int w = img.width, h = img.height;
  const double inv = 1.0 / (2 * radius + 1);
  std::vector<float> tmp(img.values.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) acc += img.at(std::clamp(x + d, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc * inv);
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d)
        acc += tmp[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
      img.at(x, y) = static_cast<float>(acc * inv);
    }
  }
}

}  // namespace detail

/// Applies the nine-stage scheme: with probability outer_gate_prob the
/// stages run in a seeded random order, each with probability stage_prob;
/// after every stage negatives clamp to zero and the working maximum is
/// recomputed. Pure function of (img, cfg, seed).
inline Image augment(const Image& img, const AugmentConfig& cfg, std::uint64_t seed,
                     AugmentTrace* trace = nullptr) {
  const RandomKey key = RandomKey(seed).sub(0xA06);
  AugmentTrace local;
  AugmentTrace& tr = trace ? *trace : local;
  for (int i = 0; i < kNumAugmentStages; ++i) tr.order[i] = i;

  Image out = img;
  if (key.u01(0) >= cfg.outer_gate_prob) {
    tr.outer_applied = false;
    return out;
  }
  tr.outer_applied = true;

  const RandomKey perm_key = key.sub(1);
  for (int i = kNumAugmentStages - 1; i > 0; --i) {
    const int j = static_cast<int>(perm_key.below(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(i) + 1));
    std::swap(tr.order[i], tr.order[j]);
  }

  const RandomKey gate_key = key.sub(2);
  const RandomKey param_key = key.sub(3);
  const RandomKey pixel_key = key.sub(4);
  const std::size_t n_px = out.pixel_count();

  for (int pos = 0; pos < kNumAugmentStages; ++pos) {
    const int stage = tr.order[pos];
    if (gate_key.u01(static_cast<std::uint64_t>(stage)) >= cfg.stage_prob) continue;
    tr.applied[stage] = true;

    out.recompute_max();
    const double m = out.max_value;
    const RandomKey pk = param_key.sub(static_cast<std::uint64_t>(stage));
    const RandomKey xk = pixel_key.sub(static_cast<std::uint64_t>(stage));

    switch (stage) {
      case 0: {  // smoothing, 3x3 or 5x5
        const int radius = (pk.bits(0) & 1) ? 2 : 1;
        detail::box_filter(out, radius);
        break;
      }
      case 1: {  // constant offset
        const double off = pk.uniform(0, cfg.offset_lo * m, cfg.offset_hi * m);
        for (float& x : out.values) x = static_cast<float>(x + off);
        break;
      }
      case 2: {  // linear scaling
        const double s = pk.uniform(0, cfg.linear_scale_lo, cfg.linear_scale_hi);
        for (float& x : out.values) x = static_cast<float>(x * s);
        break;
      }
      case 3: {  // renormalization of [lo,hi] onto [0,max]
        const double lo = pk.uniform(0, cfg.renorm_lo_lo * m, cfg.renorm_lo_hi * m);
        const double hi = pk.uniform(1, cfg.renorm_hi_lo * m, cfg.renorm_hi_hi * m);
        const double scale = m / (hi - lo);
        for (float& x : out.values) x = static_cast<float>((x - lo) * scale);
        break;
      }
      case 4: {  // non-linear pixel-wise offset
        const double a = pk.uniform(0, cfg.sin_offset_ab_lo, cfg.sin_offset_ab_hi);
        const double b = pk.uniform(1, cfg.sin_offset_ab_lo, cfg.sin_offset_ab_hi);
        const double c = pk.uniform(2, cfg.sin_offset_c_lo, cfg.sin_offset_c_hi);
        for (float& x : out.values) x = static_cast<float>(x + a * std::sin(b * x + c));
        break;
      }
      case 5: {  // salt & pepper
        const double frac = pk.uniform(0, cfg.salt_pepper_lo, cfg.salt_pepper_hi);
        const std::size_t n = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n_px)));
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t px = xk.below(2 * i, n_px);
          out.values[px] = (xk.bits(2 * i + 1) & 1) ? static_cast<float>(m) : 0.0f;
        }
        break;
      }
      case 6: {  // additive Gaussian noise
        const double mean = pk.uniform(0, cfg.gauss_mean_lo * m, cfg.gauss_mean_hi * m);
        const double std_dev = cfg.gaussian_std_frac * m;
        for (std::size_t i = 0; i < n_px; ++i)
          out.values[i] = static_cast<float>(out.values[i] + mean + std_dev * xk.normal(i));
        break;
      }
      case 7: {  // Poisson noise
        const double s = cfg.poisson_scale;
        for (std::size_t i = 0; i < n_px; ++i)
          out.values[i] = static_cast<float>(
              static_cast<double>(xk.poisson(i, static_cast<double>(out.values[i]) * s)) / s);
        break;
      }
      case 8: {  // non-linear scaling (multiplicative)
        const double a = pk.uniform(0, cfg.sin_scale_ab_lo, cfg.sin_scale_ab_hi);
        const double b = pk.uniform(1, cfg.sin_scale_ab_lo, cfg.sin_scale_ab_hi);
        const double c = pk.uniform(2, cfg.sin_scale_c_lo, cfg.sin_scale_c_hi);
        for (float& x : out.values) x = static_cast<float>(x * (a * std::sin(b * x + c)));
        break;
      }
      default:
        break;
    }

    for (float& x : out.values)
      if (x < 0.0f) x = 0.0f;
    out.recompute_max();
    tr.min_after.emplace_back(stage, *std::min_element(out.values.begin(), out.values.end()));
  }
  return out;
}

}  // namespace xrinit
