#pragma once

#include <cstdint>
#include <vector>

#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

enum class ThresholdMode : uint8_t {
  Quantile = 0,  // inhibit the floor(q*u*v) weakest positions
  Epsilon = 1,   // inhibit positions with |delta| < epsilon
};

/// Hyperparameters of the lateral-inhibition gradient mask.
struct MaskConfig {
  double sigma = 11.0;
  int64_t kernel_size = 0;  // 0 = derive from sigma, capped to the map extent
  int64_t num_sets = 16;    // K; must divide the channel count of masked layers
  double quantile = 0.5;    // inhibition rate q
  ThresholdMode mode = ThresholdMode::Quantile;
  double epsilon = 0.0;     // only used in Epsilon mode
  std::vector<int> layer_ids;
};

/// Per-set binary masks for one sample at one layer. Entries are 0/1; every
/// channel of set k shares set_masks[k].
struct GradientMask {
  std::vector<Tensor> set_masks;  // each u x v
};

/// Discrete LoG kernel: the closed-form Laplacian-of-Gaussian sampled at
/// integer offsets around the origin, then shifted by its mean so the
/// entries sum to exactly zero and constant fields map to zero.
Tensor build_log_kernel(double sigma, int64_t size);

/// Default tap count for a given sigma: 2*ceil(3*sigma)+1, reduced to the
/// largest odd size that fits min(u, v) when the map is smaller.
int64_t default_log_kernel_size(double sigma, int64_t u, int64_t v);

/// Splits C channels into K contiguous sets and takes the l2 norm across
/// each set at every spatial position. grads is C x u x v; the result is
/// K x u x v. Squares are summed in sorted order, so any permutation of the
/// channels within a set produces bit-identical norms.
Tensor minicolumn_norms(const Tensor& grads, int64_t num_sets);

/// "Same"-size 2-D cross-correlation with zero padding at the borders.
Tensor importance_map(const Tensor& norms, const Tensor& kernel);

/// Binary mask from an importance map: the floor(q*u*v) entries with the
/// smallest |delta| become 0, the rest 1. Ties on |delta| break toward the
/// earlier row-major coordinate, which makes the zero count exact.
Tensor make_mask(const Tensor& delta, double quantile);

/// Eq.-style fixed threshold: mask 0 wherever |delta| < epsilon.
Tensor make_mask_epsilon(const Tensor& delta, double epsilon);

/// Ablation: threshold the raw norm map directly, skipping the LoG step.
Tensor make_mask_without_li(const Tensor& norms, double quantile);

/// Ablation: no minicolumns; per channel, |grad| -> LoG -> quantile mask.
/// Returns C masks for a C x u x v gradient.
std::vector<Tensor> make_mask_without_minicolumn(const Tensor& grads, const Tensor& kernel,
                                                 double quantile);

/// Full Algorithm-1 mask generation for one sample's activation gradient
/// (C x u x v): minicolumn norms, LoG, threshold.
GradientMask build_gradient_mask(const Tensor& grads, const Tensor& kernel, const MaskConfig& cfg);

}  // namespace lateralgrad
