#include "lateralgrad/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lateralgrad/errors.hpp"
#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/parallel.hpp"

namespace lateralgrad {

double iou(const BBox& a, const BBox& b) {
  const int64_t ix = std::max<int64_t>(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const int64_t iy = std::max<int64_t>(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const int64_t inter = ix * iy;
  const int64_t uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor bilinear_resize(const Tensor& m, int64_t out_h, int64_t out_w) {
  const int64_t U = m.dim(0), V = m.dim(1);
  if (U == out_h && V == out_w) return m;
  Tensor out({out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(U - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(V - 1) / static_cast<double>(out_w - 1) : 0.0;
  for (int64_t i = 0; i < out_h; ++i) {
    const double fy = static_cast<double>(i) * sy;
    const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(fy), U - 1);
    const int64_t y1 = std::min<int64_t>(y0 + 1, U - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t j = 0; j < out_w; ++j) {
      const double fx = static_cast<double>(j) * sx;
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(fx), V - 1);
      const int64_t x1 = std::min<int64_t>(x0 + 1, V - 1);
      const double wx = fx - static_cast<double>(x0);
      out(i, j) = (1.0 - wy) * ((1.0 - wx) * m(y0, x0) + wx * m(y0, x1)) +
                  wy * ((1.0 - wx) * m(y1, x0) + wx * m(y1, x1));
    }
  }
  return out;
}

std::vector<SaliencyMap> li_map_batch(const Model& model, const Tensor& batch,
                                      const std::vector<int>& target_classes,
                                      const LiMapOptions& opts) {
  const int64_t B = batch.dim(0);
  const int64_t H = batch.dim(2), W = batch.dim(3);
  if (static_cast<int64_t>(target_classes.size()) != B)
    throw UsageError("target class count does not match batch");
  for (int t : target_classes)
    if (t < 0 || t >= static_cast<int>(model.num_classes))
      throw UsageError("target class " + std::to_string(t) + " out of range");

  Tape tape = forward(model, batch);
  // seed is d(logit P)/d(logits): one-hot at the target class per sample
  Tensor seed = Tensor::zeros_like(tape.output());
  for (int64_t b = 0; b < B; ++b) seed(b, target_classes[static_cast<size_t>(b)]) = 1.0;
  backward(model, tape, seed);

  const std::vector<int> layers = model.conv_block_outputs();
  if (layers.empty()) throw ConfigError("model has no conv block outputs for saliency");

  std::vector<SaliencyMap> maps(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    maps[static_cast<size_t>(b)].F = Tensor({H, W});
    maps[static_cast<size_t>(b)].input_id = b;
    maps[static_cast<size_t>(b)].target_class = target_classes[static_cast<size_t>(b)];
  }

  for (int layer : layers) {
    const Tensor& g = tape.activation_grad(layer);
    const int64_t C = g.dim(1), U = g.dim(2), V = g.dim(3);
    const int64_t size = opts.kernel_size > 0 ? opts.kernel_size
                                              : default_log_kernel_size(opts.sigma, U, V);
    const Tensor kernel = build_log_kernel(opts.sigma, size);
    parallel_for(B, [&](int64_t b) {
      Tensor sample = slice_leading(g, b).reshaped({C, U, V});
      Tensor norms = minicolumn_norms(sample, 1).reshaped({U, V});
      Tensor delta = importance_map(norms, kernel);
      if (opts.rectify)
        for (int64_t i = 0; i < delta.numel(); ++i) delta[i] = std::fabs(delta[i]);
      maps[static_cast<size_t>(b)].F += bilinear_resize(delta, H, W);
    });
  }
  return maps;
}

SaliencyMap li_map(const Model& model, const Tensor& input, int target_class,
                   const LiMapOptions& opts) {
  if (input.ndim() != 4 || input.dim(0) != 1)
    throw UsageError("li_map expects a single 1 x C x H x W input");
  return li_map_batch(model, input, {target_class}, opts).front();
}

BBox saliency_bbox(const SaliencyMap& map, double top_fraction) {
  if (!(top_fraction > 0.0) || !(top_fraction < 1.0))
    throw ConfigError("top fraction must be in (0, 1)");
  const Tensor& F = map.F;
  const int64_t H = F.dim(0), W = F.dim(1);
  const int64_t n = static_cast<int64_t>(std::ceil(top_fraction * static_cast<double>(H * W)));
  std::vector<int64_t> order(static_cast<size_t>(H * W));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (F[a] != F[b]) return F[a] > F[b];
    return a < b;
  });
  BBox box{W, H, 0, 0};
  for (int64_t i = 0; i < n; ++i) {
    const int64_t idx = order[static_cast<size_t>(i)];
    const int64_t y = idx / W, x = idx % W;
    box.x_min = std::min(box.x_min, x);
    box.y_min = std::min(box.y_min, y);
    box.x_max = std::max(box.x_max, x + 1);
    box.y_max = std::max(box.y_max, y + 1);
  }
  return box;
}

}  // namespace lateralgrad
