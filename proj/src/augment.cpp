#include "lateralgrad/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lateralgrad/diagnostics.hpp"
#include "lateralgrad/errors.hpp"
#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/parallel.hpp"
#include "lateralgrad/rng.hpp"

namespace lateralgrad {

namespace {

// Reflect out-of-range index into [0, n), repeating the edge sample
// (… 2 1 0 | 0 1 2 … n-1 | n-1 n-2 …). Folds until in range so kernels wider
// than the image stay defined.
int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (image.ndim() != 3) throw UsageError("gaussian_blur expects C x H x W");
  if (sigma == 0.0) return image;
  const std::vector<double> taps = gaussian_taps(sigma);
  const int64_t r = static_cast<int64_t>(taps.size()) / 2;
  const int64_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor tmp({C, H, W}), out({C, H, W});
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int64_t t = -r; t <= r; ++t)
          acc += image(c, i, reflect_index(j + t, W)) * taps[static_cast<size_t>(t + r)];
        tmp(c, i, j) = acc;
      }
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int64_t t = -r; t <= r; ++t)
          acc += tmp(c, reflect_index(i + t, H), j) * taps[static_cast<size_t>(t + r)];
        out(c, i, j) = acc;
      }
  }
  return out;
}

Tensor input_mask(const Model& model, const Tensor& batch, const EnhanceConfig& cfg) {
  if (cfg.quantile < 0.0 || cfg.quantile > 1.0) throw ConfigError("quantile must be in [0, 1]");
  const int64_t N = batch.dim(0), H = batch.dim(2), W = batch.dim(3);

  // prediction of interest: the model's own argmax per sample
  Tape probe = forward(model, batch);
  std::vector<int> targets = argmax_rows(probe.output());

  LiMapOptions opts;
  opts.sigma = cfg.sigma;
  opts.kernel_size = cfg.kernel_size;
  std::vector<SaliencyMap> maps = li_map_batch(model, batch, targets, opts);

  Tensor masks({N, 1, H, W});
  parallel_for(N, [&](int64_t b) {
    Tensor m = make_mask(maps[static_cast<size_t>(b)].F, cfg.quantile);
    std::copy(m.data(), m.data() + m.numel(), masks.data() + b * H * W);
  });
  return masks;
}

std::vector<int64_t> enhance_selection(int64_t n, double sample_rate, uint64_t seed) {
  if (sample_rate < 0.0 || sample_rate > 1.0) throw ConfigError("sample rate must be in [0, 1]");
  const int64_t k = std::lround(sample_rate * static_cast<double>(n));
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(static_cast<size_t>(std::min(k, n)));
  std::sort(order.begin(), order.end());
  return order;
}

Tensor enhance(const Tensor& batch, const Tensor& masks, const EnhanceConfig& cfg) {
  const int64_t N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  if (masks.ndim() != 4 || masks.dim(0) != N || masks.dim(1) != 1 || masks.dim(2) != H ||
      masks.dim(3) != W)
    throw UsageError("masks must be N x 1 x H x W matching the batch");

  Tensor out = batch;
  const std::vector<int64_t> selected = enhance_selection(N, cfg.sample_rate, cfg.seed);
  parallel_for(static_cast<int64_t>(selected.size()), [&](int64_t si) {
    const int64_t b = selected[static_cast<size_t>(si)];
    Tensor image = slice_leading(batch, b).reshaped({C, H, W});
    Tensor blurred = gaussian_blur(image, cfg.blur_sigma);
    const double* md = masks.data() + b * H * W;
    double* od = out.data() + b * C * H * W;
    const double* bd = blurred.data();
    const double* id = image.data();
    for (int64_t c = 0; c < C; ++c)
      for (int64_t ij = 0; ij < H * W; ++ij) {
        const int64_t o = c * H * W + ij;
        od[o] = md[ij] != 0.0 ? id[o] : bd[o];
      }
  });
  return out;
}

}  // namespace lateralgrad
