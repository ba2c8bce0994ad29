#pragma once

#include <vector>

#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

inline constexpr double kGsnrVarianceEps = 1e-12;
inline constexpr double kGsnrCap = 1e15;

/// Gradient signal-to-noise ratio per parameter: squared mean over
/// population variance of the per-sample gradients, stabilized by
/// kGsnrVarianceEps and capped at kGsnrCap. Needs at least two samples.
Tensor gsnr(const std::vector<Tensor>& per_sample_grads);
Tensor gsnr_from_pointers(const std::vector<const Tensor*>& per_sample_grads);

/// Nearest-rank percentile of an ascending-sorted vector.
double percentile_sorted(const std::vector<double>& sorted, double p);

/// 1-D Gaussian taps for radius ceil(3*sigma), normalized to sum 1.
/// sigma == 0 degenerates to the identity kernel [1].
std::vector<double> gaussian_taps(double sigma);

/// 2-D Gaussian smoothing with zero padding (the border policy shared with
/// the LoG convolution).
Tensor gaussian_smooth_zero_pad(const Tensor& m, double sigma);

/// 5-point discrete Laplacian with zero padding.
Tensor laplacian_5pt(const Tensor& m);

/// The discrete composition laplacian * gaussian(sigma): convolving with
/// this kernel equals smooth-then-laplacian away from borders.
Tensor composed_log_kernel(double sigma);

struct FluxSlice {
  Tensor flux;              // C x u x v of |laplacian(smoothed feature gradient)|
  Tensor activation_deriv;  // the non-negative factor, stored alongside
};

/// Gradient flux sensitivity proxy per spatial position: Gaussian-smooth the
/// feature gradient channelwise, apply the 5-point Laplacian, take absolute
/// values.
FluxSlice flux_sensitivity(const Tensor& layer_grad, const Tensor& activation_deriv, double sigma);

}  // namespace lateralgrad
