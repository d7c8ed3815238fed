#include <catch_amalgamated.hpp>

#include "xrinit/augment.hpp"
#include "xrinit/rng.hpp"

using namespace xrinit;

namespace {

Image test_image(int n = 8, std::uint64_t seed = 5) {
  Image img = Image::create(n, n);
  const RandomKey k(seed);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = static_cast<float>(k.u01(i));
  img.recompute_max();
  return img;
}

}  // namespace

TEST_CASE("disabled outer gate is the identity") {
  const Image img = test_image();
  AugmentConfig cfg;
  cfg.outer_gate_prob = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    AugmentTrace trace;
    const Image out = augment(img, cfg, seed, &trace);
    REQUIRE_FALSE(trace.outer_applied);
    REQUIRE(out.values == img.values);
  }
}

TEST_CASE("augment is deterministic under the seed") {
  const Image img = test_image();
  const AugmentConfig cfg;
  const Image a = augment(img, cfg, 1234);
  const Image b = augment(img, cfg, 1234);
  REQUIRE(a.values == b.values);

  // different seeds eventually differ
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 8 && !any_diff; ++s) {
    any_diff = augment(img, cfg, s).values != a.values;
  }
  REQUIRE(any_diff);
}

TEST_CASE("output is non-negative after every stage") {
  const Image img = test_image(16, 7);
  AugmentConfig cfg;
  cfg.outer_gate_prob = 1.0;  // force the pipeline on
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    AugmentTrace trace;
    const Image out = augment(img, cfg, seed, &trace);
    for (const auto& [stage, min_after] : trace.min_after) {
      REQUIRE(min_after >= 0.0f);
    }
    for (float v : out.values) REQUIRE(v >= 0.0f);
  }
}

TEST_CASE("box smoothing preserves constant images") {
  Image img = Image::create(9, 9, 0.6f);
  detail::box_filter(img, 1);
  for (float v : img.values) REQUIRE(v == Catch::Approx(0.6).margin(1e-6));
  detail::box_filter(img, 2);
  for (float v : img.values) REQUIRE(v == Catch::Approx(0.6).margin(1e-6));
}

TEST_CASE("smoothing-only run keeps a constant image constant") {
  Image img = Image::create(8, 8, 0.5f);
  AugmentConfig cfg;
  cfg.outer_gate_prob = 1.0;
  // find a seed whose only applied stage is the smoothing stage
  bool found = false;
  for (std::uint64_t seed = 0; seed < 30000 && !found; ++seed) {
    AugmentTrace trace;
    const Image out = augment(img, cfg, seed, &trace);
    int applied = 0;
    for (bool a : trace.applied) applied += a ? 1 : 0;
    if (applied == 1 && trace.applied[0]) {
      found = true;
      for (float v : out.values) REQUIRE(v == Catch::Approx(0.5).margin(1e-6));
    }
  }
  REQUIRE(found);
}

TEST_CASE("empirical gate and stage frequencies match the configured probabilities") {
  const Image img = test_image(4, 11);
  const AugmentConfig cfg;  // 0.5 outer, 0.5 per stage
  const int n = 10000;
  int outer = 0;
  std::array<int, kNumAugmentStages> stage_counts{};
  for (int s = 0; s < n; ++s) {
    AugmentTrace trace;
    augment(img, cfg, static_cast<std::uint64_t>(s), &trace);
    if (trace.outer_applied) ++outer;
    for (int j = 0; j < kNumAugmentStages; ++j)
      if (trace.applied[j]) ++stage_counts[j];
  }
  REQUIRE(static_cast<double>(outer) / n == Catch::Approx(0.5).margin(0.02));
  for (int j = 0; j < kNumAugmentStages; ++j) {
    REQUIRE(static_cast<double>(stage_counts[j]) / n == Catch::Approx(0.25).margin(0.02));
  }
}

TEST_CASE("stage order is a permutation") {
  AugmentConfig cfg;
  cfg.outer_gate_prob = 1.0;
  AugmentTrace trace;
  augment(test_image(), cfg, 77, &trace);
  std::array<bool, kNumAugmentStages> seen{};
  for (int s : trace.order) {
    REQUIRE(s >= 0);
    REQUIRE(s < kNumAugmentStages);
    REQUIRE_FALSE(seen[s]);
    seen[s] = true;
  }
}
