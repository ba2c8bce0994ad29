#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lateralgrad/errors.hpp"
#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/rng.hpp"
#include "lateralgrad/saliency.hpp"
#include "oracle_helpers.hpp"

using namespace lateralgrad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

BBox bbox_bruteforce(const Tensor& F, double top_fraction) {
  const int64_t H = F.dim(0), W = F.dim(1);
  const int64_t n = static_cast<int64_t>(std::ceil(top_fraction * static_cast<double>(H * W)));
  std::vector<std::pair<double, int64_t>> all;
  for (int64_t i = 0; i < H * W; ++i) all.emplace_back(F[i], i);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int64_t xmin = W, ymin = H, xmax = -1, ymax = -1;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t y = all[static_cast<size_t>(i)].second / W;
    const int64_t x = all[static_cast<size_t>(i)].second % W;
    xmin = std::min(xmin, x);
    ymin = std::min(ymin, y);
    xmax = std::max(xmax, x);
    ymax = std::max(ymax, y);
  }
  return BBox{xmin, ymin, xmax + 1, ymax + 1};
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{0, 0, 2, 2}) == doctest::Approx(1.0));
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{5, 5, 7, 7}) == doctest::Approx(0.0));
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou is symmetric and reflexive") {
  Rng rng(51);
  for (int t = 0; t < 50; ++t) {
    BBox a{rng.below(10), rng.below(10), 0, 0};
    a.x_max = a.x_min + 1 + rng.below(6);
    a.y_max = a.y_min + 1 + rng.below(6);
    BBox b{rng.below(10), rng.below(10), 0, 0};
    b.x_max = b.x_min + 1 + rng.below(6);
    b.y_max = b.y_min + 1 + rng.below(6);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("bilinear resize is the identity at equal size") {
  Rng rng(52);
  Tensor m = random_tensor({7, 5}, rng);
  CHECK(bitwise_equal(bilinear_resize(m, 7, 5), m));
}

TEST_CASE("bilinear resize keeps corners (corner-aligned sampling)") {
  Rng rng(53);
  Tensor m = random_tensor({4, 6}, rng);
  Tensor up = bilinear_resize(m, 9, 13);
  CHECK(up(0, 0) == doctest::Approx(m(0, 0)));
  CHECK(up(0, 12) == doctest::Approx(m(0, 5)));
  CHECK(up(8, 0) == doctest::Approx(m(3, 0)));
  CHECK(up(8, 12) == doctest::Approx(m(3, 5)));
}

TEST_CASE("bilinear resize of a constant map stays constant") {
  Tensor m({3, 3}, 2.5);
  Tensor up = bilinear_resize(m, 10, 11);
  for (int64_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(2.5));
}

TEST_CASE("saliency bbox selects the hot patch") {
  Tensor F({10, 10});
  for (int64_t y = 4; y < 7; ++y)
    for (int64_t x = 2; x < 5; ++x) F(y, x) = 5.0;
  SaliencyMap map;
  map.F = F;
  BBox box = saliency_bbox(map, 0.09);  // ceil(9) pixels
  CHECK(box.x_min == 2);
  CHECK(box.y_min == 4);
  CHECK(box.x_max == 5);
  CHECK(box.y_max == 7);
}

TEST_CASE("constant saliency falls back to row-major tie order") {
  SaliencyMap map;
  map.F = Tensor({10, 10}, 1.0);
  BBox box = saliency_bbox(map, 0.15);  // first 15 row-major pixels
  CHECK(box.x_min == 0);
  CHECK(box.y_min == 0);
  CHECK(box.x_max == 10);  // rows 0 and part of row 1
  CHECK(box.y_max == 2);
}

TEST_CASE("saliency bbox matches the brute-force oracle") {
  Rng rng(54);
  for (int trial = 0; trial < 25; ++trial) {
    SaliencyMap map;
    map.F = Tensor({12, 9});
    for (int64_t i = 0; i < map.F.numel(); ++i)
      map.F[i] = std::fabs(rng.uniform(-1.0, 1.0));
    if (trial % 3 == 0)  // force ties
      for (int64_t i = 0; i < map.F.numel(); ++i) map.F[i] = std::round(map.F[i] * 4.0) / 4.0;
    BBox fast = saliency_bbox(map, 0.15);
    BBox slow = bbox_bruteforce(map.F, 0.15);
    CHECK(fast.x_min == slow.x_min);
    CHECK(fast.y_min == slow.y_min);
    CHECK(fast.x_max == slow.x_max);
    CHECK(fast.y_max == slow.y_max);
  }
}

TEST_CASE("li_map of a single-block model is that block's resized response") {
  Rng rng(55);
  Model m = ModelBuilder(1, 8, 8).conv2d(2, 3, 1, 1).relu().flatten().linear(3).build(rng);
  Tensor input = random_tensor({1, 1, 8, 8}, rng);
  LiMapOptions opts;
  opts.sigma = 1.0;
  SaliencyMap map = li_map(m, input, 1, opts);

  // replicate the single term by hand
  Tape tape = forward(m, input);
  Tensor seed = Tensor::zeros_like(tape.output());
  seed(0, 1) = 1.0;
  backward(m, tape, seed);
  Tensor g = slice_leading(tape.activation_grad(1), 0).reshaped({2, 8, 8});
  Tensor norms = minicolumn_norms(g, 1).reshaped({8, 8});
  Tensor delta = importance_map(norms, build_log_kernel(1.0, default_log_kernel_size(1.0, 8, 8)));
  for (int64_t i = 0; i < delta.numel(); ++i) delta[i] = std::fabs(delta[i]);
  CHECK(max_abs_diff(map.F, delta) <= 1e-12);  // u == H, v == W, resize is identity
}

TEST_CASE("li_map matches a step-by-step pipeline oracle on a 2-block model") {
  Rng rng(56);
  Model m = ModelBuilder(1, 6, 6)
                .conv2d(2, 3, 1, 1)
                .relu()
                .maxpool(2)
                .conv2d(2, 3, 1, 1)
                .relu()
                .flatten()
                .linear(2)
                .build(rng);
  Tensor input = random_tensor({1, 1, 6, 6}, rng);
  LiMapOptions opts;
  opts.sigma = 1.0;
  SaliencyMap map = li_map(m, input, 0, opts);

  Tape tape = forward(m, input);
  Tensor seed = Tensor::zeros_like(tape.output());
  seed(0, 0) = 1.0;
  backward(m, tape, seed);

  Tensor expect({6, 6});
  for (int layer : m.conv_block_outputs()) {
    const Tensor& g4 = tape.activation_grad(layer);
    const int64_t C = g4.dim(1), U = g4.dim(2), V = g4.dim(3);
    // K=1 norms by independent loops
    Tensor norms({U, V});
    for (int64_t i = 0; i < U; ++i)
      for (int64_t j = 0; j < V; ++j) {
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c) acc += g4(0, c, i, j) * g4(0, c, i, j);
        norms(i, j) = std::sqrt(acc);
      }
    Tensor kernel = build_log_kernel(opts.sigma, default_log_kernel_size(opts.sigma, U, V));
    Tensor delta = oracle::conv_same_naive(norms, kernel);
    for (int64_t i = 0; i < delta.numel(); ++i) delta[i] = std::fabs(delta[i]);
    expect += bilinear_resize(delta, 6, 6);
  }
  CHECK(max_abs_diff(map.F, expect) <= 1e-10);
}

TEST_CASE("scaling the seed gradient scales F and keeps the box") {
  Rng rng(57);
  Model m = ModelBuilder(1, 8, 8)
                .conv2d(2, 3, 1, 1)
                .relu()
                .flatten()
                .linear(2)
                .build(rng);
  Tensor input = random_tensor({1, 1, 8, 8}, rng);

  // run the pipeline manually so the seed can be scaled
  auto run = [&](double c) {
    Tape tape = forward(m, input);
    Tensor seed = Tensor::zeros_like(tape.output());
    seed(0, 1) = c;
    backward(m, tape, seed);
    Tensor g = slice_leading(tape.activation_grad(1), 0).reshaped({2, 8, 8});
    Tensor norms = minicolumn_norms(g, 1).reshaped({8, 8});
    Tensor kernel = build_log_kernel(1.0, 7);
    Tensor delta = importance_map(norms, kernel);
    for (int64_t i = 0; i < delta.numel(); ++i) delta[i] = std::fabs(delta[i]);
    return delta;
  };
  Tensor f1 = run(1.0);
  Tensor f2 = run(2.0);
  SaliencyMap m1, m2;
  m1.F = f1;
  m2.F = f2;
  for (int64_t i = 0; i < f1.numel(); ++i)
    CHECK(f2[i] == doctest::Approx(2.0 * f1[i]).epsilon(1e-12));
  BBox b1 = saliency_bbox(m1, 0.15), b2 = saliency_bbox(m2, 0.15);
  CHECK(b1.x_min == b2.x_min);
  CHECK(b1.y_min == b2.y_min);
  CHECK(b1.x_max == b2.x_max);
  CHECK(b1.y_max == b2.y_max);
}

TEST_CASE("li_map validates the target class") {
  Rng rng(58);
  Model m = ModelBuilder(1, 4, 4).conv2d(1, 3, 1, 1).relu().flatten().linear(2).build(rng);
  Tensor input = random_tensor({1, 1, 4, 4}, rng);
  CHECK_THROWS_AS(li_map(m, input, 7), UsageError);
  CHECK_THROWS_AS(li_map(m, input, -1), UsageError);
}

TEST_CASE("saliency map F is non-negative with rectification") {
  Rng rng(59);
  Model m = ModelBuilder(1, 8, 8)
                .conv2d(2, 3, 1, 1)
                .relu()
                .maxpool(2)
                .conv2d(4, 3, 1, 1)
                .relu()
                .flatten()
                .linear(3)
                .build(rng);
  Tensor input = random_tensor({1, 1, 8, 8}, rng);
  SaliencyMap map = li_map(m, input, 2);
  CHECK(map.F.dim(0) == 8);
  CHECK(map.F.dim(1) == 8);
  for (int64_t i = 0; i < map.F.numel(); ++i) CHECK(map.F[i] >= 0.0);
}
