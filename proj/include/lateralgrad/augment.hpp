#pragma once

#include <cstdint>
#include <vector>

#include "lateralgrad/model.hpp"
#include "lateralgrad/saliency.hpp"
#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

/// Configuration of the background-blur data enhancement pass.
struct EnhanceConfig {
  double quantile = 0.5;     // q over saliency values; mask 0 below the cut
  double sigma = 2.0;        // LoG sigma of the saliency pipeline
  int64_t kernel_size = 0;   // 0 = derive from sigma
  double blur_sigma = 2.0;   // gaussian blur applied to inhibited regions
  double sample_rate = 1.0;  // fraction r of images enhanced per batch
  uint64_t seed = 0;
};

/// Separable per-channel Gaussian blur, radius ceil(3*sigma), kernel
/// normalized to sum 1, reflected borders (edge sample repeated). sigma 0 is
/// the identity.
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Saliency-derived input masks for a batch (Algorithm-2 steps 2..5):
/// LI-Map per sample with K=1 seeded from the model's predicted class, then
/// a per-sample count-exact quantile cut. Returns N x 1 x H x W of {0,1}.
Tensor input_mask(const Model& model, const Tensor& batch, const EnhanceConfig& cfg);

/// Blends blur into the mask-zero (background) regions of round(r*N) images
/// selected without replacement by the seeded rng; the rest pass through
/// untouched.
Tensor enhance(const Tensor& batch, const Tensor& masks, const EnhanceConfig& cfg);

/// The indices enhance() would select for a batch of n images.
std::vector<int64_t> enhance_selection(int64_t n, double sample_rate, uint64_t seed);

}  // namespace lateralgrad
