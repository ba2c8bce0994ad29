#pragma once

#include <cstdint>
#include <string>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/bbox.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

struct SaliencyMap {
  Tensor F;  // H x W, non-negative
  std::string model_id;
  int64_t input_id = -1;
  int target_class = -1;
};

struct LiMapOptions {
  double sigma = 2.0;
  int64_t kernel_size = 0;  // 0 = derive from sigma per layer, capped to the map
  bool rectify = true;      // |delta| before summing; false keeps signed responses
};

/// Bilinear resize with corner-aligned sampling. Identity when the sizes
/// already match.
Tensor bilinear_resize(const Tensor& m, int64_t out_h, int64_t out_w);

/// LI-Map saliency: backprop from the target logit, take K=1 minicolumn
/// norms of the activation gradient at every conv-block output, LoG filter,
/// rectify, resize to the input extent and sum across layers.
SaliencyMap li_map(const Model& model, const Tensor& input, int target_class,
                   const LiMapOptions& opts = {});

/// Saliency maps for a whole batch at once (one backward pass); target class
/// per sample.
std::vector<SaliencyMap> li_map_batch(const Model& model, const Tensor& batch,
                                      const std::vector<int>& target_classes,
                                      const LiMapOptions& opts = {});

/// Tight box over the ceil(top_fraction * H * W) largest values of F.
/// Equal values are taken in row-major order.
BBox saliency_bbox(const SaliencyMap& map, double top_fraction);

}  // namespace lateralgrad
