#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "lateralgrad/augment.hpp"
#include "lateralgrad/diagnostics.hpp"
#include "lateralgrad/rng.hpp"
#include "oracle_helpers.hpp"

using namespace lateralgrad;

namespace {

Tensor random_image(int64_t c, int64_t h, int64_t w, Rng& rng) {
  Tensor t({c, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

Model tiny_model(Rng& rng, int64_t h = 16, int64_t w = 16) {
  return ModelBuilder(3, h, w).conv2d(2, 3, 1, 1).relu().maxpool(2).flatten().linear(3).build(rng);
}

}  // namespace

TEST_CASE("blur with sigma 0 is the identity") {
  Rng rng(61);
  Tensor img = random_image(3, 8, 8, rng);
  CHECK(bitwise_equal(gaussian_blur(img, 0.0), img));
}

TEST_CASE("blur leaves constant images unchanged") {
  Tensor img({3, 9, 9}, 0.42);
  Tensor out = gaussian_blur(img, 1.7);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("blur preserves the mean of a constant interior") {
  Tensor img({1, 16, 16}, 1.0);
  Tensor out = gaussian_blur(img, 2.0);
  double mean = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) mean += out[i];
  mean /= static_cast<double>(out.numel());
  CHECK(std::fabs(mean - 1.0) <= 1e-10);
}

TEST_CASE("impulse response is the outer product of 1-D kernels") {
  const double sigma = 1.0;
  const std::vector<double> taps = gaussian_taps(sigma);
  const int64_t r = static_cast<int64_t>(taps.size()) / 2;
  Tensor img({1, 17, 17});
  img(0, 8, 8) = 1.0;
  Tensor out = gaussian_blur(img, sigma);
  for (int64_t dy = -r; dy <= r; ++dy)
    for (int64_t dx = -r; dx <= r; ++dx)
      CHECK(out(0, 8 + dy, 8 + dx) ==
            doctest::Approx(taps[static_cast<size_t>(dy + r)] * taps[static_cast<size_t>(dx + r)])
                .epsilon(1e-12));
}

TEST_CASE("blur matches a separable hand oracle on one image") {
  Rng rng(62);
  const double sigma = 1.3;
  Tensor img = random_image(1, 8, 8, rng);
  Tensor fast = gaussian_blur(img, sigma);

  const std::vector<double> taps = gaussian_taps(sigma);
  const int64_t r = static_cast<int64_t>(taps.size()) / 2;
  auto reflect = [](int64_t i, int64_t n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    return i;
  };
  Tensor rows({1, 8, 8});
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int64_t t = -r; t <= r; ++t)
        acc += img(0, i, reflect(j + t, 8)) * taps[static_cast<size_t>(t + r)];
      rows(0, i, j) = acc;
    }
  Tensor expect({1, 8, 8});
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int64_t t = -r; t <= r; ++t)
        acc += rows(0, reflect(i + t, 8), j) * taps[static_cast<size_t>(t + r)];
      expect(0, i, j) = acc;
    }
  CHECK(max_abs_diff(fast, expect) <= 1e-10);
}

TEST_CASE("blur survives kernels wider than the image") {
  Tensor img({1, 3, 3}, 1.0);
  img(0, 1, 1) = 0.0;
  Tensor out = gaussian_blur(img, 5.0);  // radius 15 on a 3x3 image
  CHECK(out.all_finite());
}

TEST_CASE("input_mask quantile extremes") {
  Rng rng(63);
  Model m = tiny_model(rng);
  Tensor batch({2, 3, 16, 16});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform(-1.0, 1.0);

  EnhanceConfig cfg;
  cfg.sigma = 1.0;
  SUBCASE("q = 0 inhibits nothing") {
    cfg.quantile = 0.0;
    Tensor masks = input_mask(m, batch, cfg);
    for (int64_t i = 0; i < masks.numel(); ++i) CHECK(masks[i] == 1.0);
  }
  SUBCASE("q = 1 inhibits everything") {
    cfg.quantile = 1.0;
    Tensor masks = input_mask(m, batch, cfg);
    for (int64_t i = 0; i < masks.numel(); ++i) CHECK(masks[i] == 0.0);
  }
  SUBCASE("the fraction of ones is count-exact") {
    cfg.quantile = 0.37;
    Tensor masks = input_mask(m, batch, cfg);
    const int64_t hw = 16 * 16;
    const int64_t expect_zeros = static_cast<int64_t>(std::floor(0.37 * hw));
    for (int64_t b = 0; b < 2; ++b) {
      int64_t zeros = 0;
      for (int64_t i = 0; i < hw; ++i)
        if (masks[b * hw + i] == 0.0) ++zeros;
      CHECK(zeros == expect_zeros);
    }
  }
}

TEST_CASE("enhance with rate 0 is bitwise identity") {
  Rng rng(64);
  Tensor batch({3, 3, 8, 8});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform();
  Tensor masks({3, 1, 8, 8}, 0.0);  // everything inhibited, but nothing selected
  EnhanceConfig cfg;
  cfg.sample_rate = 0.0;
  cfg.blur_sigma = 2.0;
  CHECK(bitwise_equal(enhance(batch, masks, cfg), batch));
}

TEST_CASE("enhance with blur sigma 0 is bitwise identity") {
  Rng rng(65);
  Tensor batch({3, 3, 8, 8});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform();
  Tensor masks({3, 1, 8, 8}, 0.0);
  EnhanceConfig cfg;
  cfg.sample_rate = 1.0;
  cfg.blur_sigma = 0.0;
  CHECK(bitwise_equal(enhance(batch, masks, cfg), batch));
}

TEST_CASE("all-ones masks leave selected images untouched") {
  Rng rng(66);
  Tensor batch({2, 3, 8, 8});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform();
  Tensor masks({2, 1, 8, 8}, 1.0);
  EnhanceConfig cfg;
  cfg.sample_rate = 1.0;
  cfg.blur_sigma = 3.0;
  CHECK(bitwise_equal(enhance(batch, masks, cfg), batch));
}

TEST_CASE("changed pixels are exactly the inhibited positions of selected images") {
  Rng rng(67);
  const int64_t N = 6, HW = 64;
  Tensor batch({N, 3, 8, 8});
  for (int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniform();
  Tensor masks({N, 1, 8, 8});
  for (int64_t i = 0; i < masks.numel(); ++i) masks[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

  EnhanceConfig cfg;
  cfg.sample_rate = 0.5;  // 3 of 6
  cfg.blur_sigma = 1.5;
  cfg.seed = 9;
  Tensor out = enhance(batch, masks, cfg);
  const std::vector<int64_t> selected = enhance_selection(N, cfg.sample_rate, cfg.seed);
  CHECK(selected.size() == 3);
  std::set<int64_t> sel(selected.begin(), selected.end());

  for (int64_t b = 0; b < N; ++b)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t ij = 0; ij < HW; ++ij) {
        const int64_t idx = (b * 3 + c) * HW + ij;
        if (out[idx] != batch[idx]) {
          CHECK(sel.count(b) == 1);
          CHECK(masks[b * HW + ij] == 0.0);
        }
      }
}

TEST_CASE("selection is deterministic under the seed and sized by rounding") {
  CHECK(enhance_selection(10, 0.5, 3) == enhance_selection(10, 0.5, 3));
  CHECK(enhance_selection(10, 0.25, 3).size() == 3);  // round(2.5) away from zero
  CHECK(enhance_selection(10, 0.0, 3).empty());
  CHECK(enhance_selection(10, 1.0, 3).size() == 10);
  CHECK(enhance_selection(7, 0.5, 1) != enhance_selection(7, 0.5, 2));
}
