#include "lateralgrad/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

namespace {

Tensor gsnr_impl(const std::vector<const Tensor*>& grads) {
  if (grads.size() < 2) throw UsageError("GSNR needs at least 2 per-sample gradients");
  const Tensor& first = *grads.front();
  for (const Tensor* g : grads)
    if (!g->same_shape(first)) throw UsageError("per-sample gradient shapes differ");
  const double inv_n = 1.0 / static_cast<double>(grads.size());
  Tensor out = Tensor::zeros_like(first);
  for (int64_t i = 0; i < first.numel(); ++i) {
    double mean = 0.0;
    for (const Tensor* g : grads) mean += (*g)[i];
    mean *= inv_n;
    double var = 0.0;
    for (const Tensor* g : grads) {
      const double d = (*g)[i] - mean;
      var += d * d;
    }
    var *= inv_n;  // population variance
    out[i] = std::min(mean * mean / (var + kGsnrVarianceEps), kGsnrCap);
  }
  return out;
}

}  // namespace

Tensor gsnr(const std::vector<Tensor>& per_sample_grads) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(per_sample_grads.size());
  for (const Tensor& g : per_sample_grads) ptrs.push_back(&g);
  return gsnr_impl(ptrs);
}

Tensor gsnr_from_pointers(const std::vector<const Tensor*>& per_sample_grads) {
  return gsnr_impl(per_sample_grads);
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const auto n = static_cast<int64_t>(sorted.size());
  int64_t rank = static_cast<int64_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<int64_t>(rank, 1, n);
  return sorted[static_cast<size_t>(rank - 1)];
}

std::vector<double> gaussian_taps(double sigma) {
  if (sigma < 0.0) throw ConfigError("gaussian sigma must be non-negative");
  if (sigma == 0.0) return {1.0};
  const int64_t r = static_cast<int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int64_t i = -r; i <= r; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<size_t>(i + r)] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Tensor gaussian_smooth_zero_pad(const Tensor& m, double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  const int64_t r = static_cast<int64_t>(taps.size()) / 2;
  const int64_t U = m.dim(0), V = m.dim(1);
  Tensor tmp({U, V}), out({U, V});
  for (int64_t i = 0; i < U; ++i)
    for (int64_t j = 0; j < V; ++j) {
      double acc = 0.0;
      for (int64_t t = -r; t <= r; ++t) {
        const int64_t jj = j + t;
        if (jj >= 0 && jj < V) acc += m(i, jj) * taps[static_cast<size_t>(t + r)];
      }
      tmp(i, j) = acc;
    }
  for (int64_t i = 0; i < U; ++i)
    for (int64_t j = 0; j < V; ++j) {
      double acc = 0.0;
      for (int64_t t = -r; t <= r; ++t) {
        const int64_t ii = i + t;
        if (ii >= 0 && ii < U) acc += tmp(ii, j) * taps[static_cast<size_t>(t + r)];
      }
      out(i, j) = acc;
    }
  return out;
}

Tensor laplacian_5pt(const Tensor& m) {
  const int64_t U = m.dim(0), V = m.dim(1);
  Tensor out({U, V});
  auto at = [&](int64_t i, int64_t j) -> double {
    if (i < 0 || i >= U || j < 0 || j >= V) return 0.0;
    return m(i, j);
  };
  for (int64_t i = 0; i < U; ++i)
    for (int64_t j = 0; j < V; ++j)
      out(i, j) = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * m(i, j);
  return out;
}

Tensor composed_log_kernel(double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  const int64_t r = static_cast<int64_t>(taps.size()) / 2;
  const int64_t S = 2 * (r + 1) + 1;  // gaussian radius + 1 for the stencil
  Tensor k({S, S});
  // separable gaussian stamped through the 5-point stencil
  const int64_t c = r + 1;
  auto add = [&](int64_t di, int64_t dj, double w) {
    for (int64_t i = -r; i <= r; ++i)
      for (int64_t j = -r; j <= r; ++j)
        k(c + i + di, c + j + dj) +=
            w * taps[static_cast<size_t>(i + r)] * taps[static_cast<size_t>(j + r)];
  };
  add(-1, 0, 1.0);
  add(1, 0, 1.0);
  add(0, -1, 1.0);
  add(0, 1, 1.0);
  add(0, 0, -4.0);
  return k;
}

FluxSlice flux_sensitivity(const Tensor& layer_grad, const Tensor& activation_deriv,
                           double sigma) {
  if (layer_grad.ndim() != 3) throw UsageError("flux_sensitivity expects C x u x v");
  if (!activation_deriv.empty() && !activation_deriv.same_shape(layer_grad))
    throw UsageError("activation derivative shape mismatch");
  const int64_t C = layer_grad.dim(0), U = layer_grad.dim(1), V = layer_grad.dim(2);
  FluxSlice slice;
  slice.flux = Tensor({C, U, V});
  slice.activation_deriv = activation_deriv;
  for (int64_t ch = 0; ch < C; ++ch) {
    Tensor plane({U, V});
    std::copy(layer_grad.data() + ch * U * V, layer_grad.data() + (ch + 1) * U * V, plane.data());
    Tensor lap = laplacian_5pt(gaussian_smooth_zero_pad(plane, sigma));
    for (int64_t ij = 0; ij < U * V; ++ij)
      slice.flux[ch * U * V + ij] = std::fabs(lap[ij]);
  }
  return slice;
}

}  // namespace lateralgrad
