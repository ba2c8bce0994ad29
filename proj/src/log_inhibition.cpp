#include "lateralgrad/log_inhibition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

Tensor build_log_kernel(double sigma, int64_t size) {
  if (!(sigma > 0.0)) throw ConfigError("LoG sigma must be positive");
  if (size < 1 || size % 2 == 0)
    throw ConfigError("LoG kernel size must be odd and positive, got " + std::to_string(size));
  const int64_t r = size / 2;
  Tensor k({size, size});
  const double s2 = sigma * sigma;
  const double norm = -1.0 / (3.14159265358979323846 * s2 * s2);
  for (int64_t y = -r; y <= r; ++y) {
    for (int64_t x = -r; x <= r; ++x) {
      const double q = static_cast<double>(x * x + y * y) / (2.0 * s2);
      k(y + r, x + r) = norm * (1.0 - q) * std::exp(-q);
    }
  }
  // shift to exact zero sum so constant inputs are annihilated
  double mean = 0.0;
  for (int64_t i = 0; i < k.numel(); ++i) mean += k[i];
  mean /= static_cast<double>(k.numel());
  for (int64_t i = 0; i < k.numel(); ++i) k[i] -= mean;
  return k;
}

int64_t default_log_kernel_size(double sigma, int64_t u, int64_t v) {
  int64_t size = 2 * static_cast<int64_t>(std::ceil(3.0 * sigma)) + 1;
  int64_t cap = std::min(u, v);
  if (cap % 2 == 0) cap -= 1;
  if (cap < 1) cap = 1;
  return std::min(size, cap);
}

Tensor minicolumn_norms(const Tensor& grads, int64_t num_sets) {
  if (grads.ndim() != 3) throw UsageError("minicolumn_norms expects C x u x v");
  const int64_t C = grads.dim(0), U = grads.dim(1), V = grads.dim(2);
  if (num_sets < 1 || C % num_sets != 0)
    throw ConfigError("set count " + std::to_string(num_sets) + " does not divide channels " +
                      std::to_string(C));
  const int64_t width = C / num_sets;
  Tensor out({num_sets, U, V});
  const double* gd = grads.data();
  double* od = out.data();
  std::vector<double> sq(static_cast<size_t>(width));
  for (int64_t k = 0; k < num_sets; ++k) {
    const double* base = gd + k * width * U * V;
    for (int64_t ij = 0; ij < U * V; ++ij) {
      for (int64_t c = 0; c < width; ++c) {
        const double g = base[c * U * V + ij];
        sq[static_cast<size_t>(c)] = g * g;
      }
      std::sort(sq.begin(), sq.end());
      double acc = 0.0;
      for (double s : sq) acc += s;
      od[k * U * V + ij] = std::sqrt(acc);
    }
  }
  return out;
}

Tensor importance_map(const Tensor& norms, const Tensor& kernel) {
  if (norms.ndim() != 2 || kernel.ndim() != 2) throw UsageError("importance_map expects matrices");
  const int64_t U = norms.dim(0), V = norms.dim(1);
  const int64_t S = kernel.dim(0), R = S / 2;
  Tensor out({U, V});
  const double* nd = norms.data();
  const double* kd = kernel.data();
  double* od = out.data();
  for (int64_t i = 0; i < U; ++i) {
    const int64_t kh_lo = std::max<int64_t>(0, R - i);
    const int64_t kh_hi = std::min<int64_t>(S, U + R - i);
    for (int64_t j = 0; j < V; ++j) {
      const int64_t kw_lo = std::max<int64_t>(0, R - j);
      const int64_t kw_hi = std::min<int64_t>(S, V + R - j);
      double acc = 0.0;
      for (int64_t kh = kh_lo; kh < kh_hi; ++kh) {
        const double* nrow = nd + (i + kh - R) * V + (j + kw_lo - R);
        const double* krow = kd + kh * S + kw_lo;
        for (int64_t kw = 0; kw < kw_hi - kw_lo; ++kw) acc += nrow[kw] * krow[kw];
      }
      od[i * V + j] = acc;
    }
  }
  return out;
}

namespace {

// Zeroes `zeros` entries of |values| in ascending (|value|, row-major) order.
Tensor mask_smallest(const Tensor& values, int64_t zeros) {
  const int64_t n = values.numel();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    const double fa = std::fabs(values[a]), fb = std::fabs(values[b]);
    if (fa != fb) return fa < fb;
    return a < b;
  });
  Tensor mask(values.shape(), 1.0);
  for (int64_t i = 0; i < zeros; ++i) mask[order[static_cast<size_t>(i)]] = 0.0;
  return mask;
}

}  // namespace

Tensor make_mask(const Tensor& delta, double quantile) {
  if (quantile < 0.0 || quantile > 1.0) throw ConfigError("quantile must be in [0, 1]");
  const int64_t zeros = static_cast<int64_t>(std::floor(quantile * static_cast<double>(delta.numel())));
  return mask_smallest(delta, zeros);
}

Tensor make_mask_epsilon(const Tensor& delta, double epsilon) {
  Tensor mask(delta.shape(), 1.0);
  for (int64_t i = 0; i < delta.numel(); ++i)
    if (std::fabs(delta[i]) < epsilon) mask[i] = 0.0;
  return mask;
}

Tensor make_mask_without_li(const Tensor& norms, double quantile) {
  return make_mask(norms, quantile);
}

std::vector<Tensor> make_mask_without_minicolumn(const Tensor& grads, const Tensor& kernel,
                                                 double quantile) {
  if (grads.ndim() != 3) throw UsageError("expected C x u x v gradients");
  const int64_t C = grads.dim(0), U = grads.dim(1), V = grads.dim(2);
  std::vector<Tensor> masks;
  masks.reserve(static_cast<size_t>(C));
  Tensor absmap({U, V});
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ij = 0; ij < U * V; ++ij) absmap[ij] = std::fabs(grads[c * U * V + ij]);
    masks.push_back(make_mask(importance_map(absmap, kernel), quantile));
  }
  return masks;
}

GradientMask build_gradient_mask(const Tensor& grads, const Tensor& kernel,
                                 const MaskConfig& cfg) {
  Tensor norms = minicolumn_norms(grads, cfg.num_sets);
  const int64_t U = norms.dim(1), V = norms.dim(2);
  GradientMask out;
  out.set_masks.reserve(static_cast<size_t>(cfg.num_sets));
  for (int64_t k = 0; k < cfg.num_sets; ++k) {
    Tensor norm_k({U, V});
    std::copy(norms.data() + k * U * V, norms.data() + (k + 1) * U * V, norm_k.data());
    Tensor delta = importance_map(norm_k, kernel);
    if (cfg.mode == ThresholdMode::Epsilon)
      out.set_masks.push_back(make_mask_epsilon(delta, cfg.epsilon));
    else
      out.set_masks.push_back(make_mask(delta, cfg.quantile));
  }
  return out;
}

}  // namespace lateralgrad
