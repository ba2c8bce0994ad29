// Independent oracles used by the unit and acceptance suites. Everything in
// here is deliberately written as plain nested loops against the public
// types, separate from the library's fast paths.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/tensor.hpp"

namespace oracle {

using lateralgrad::LayerKind;
using lateralgrad::LayerSpec;
using lateralgrad::Model;
using lateralgrad::Tensor;

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline Tensor conv2d_naive(const LayerSpec& s, const Tensor& x, const Tensor& w,
                           const Tensor& bias) {
  const int64_t B = x.dim(0), IC = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t OC = s.out_channels, K = s.kernel, ST = s.stride, P = s.pad;
  const int64_t OH = (H + 2 * P - K) / ST + 1, OW = (W + 2 * P - K) / ST + 1;
  Tensor y({B, OC, OH, OW});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          double acc = bias(oc);
          for (int64_t ic = 0; ic < IC; ++ic)
            for (int64_t kh = 0; kh < K; ++kh)
              for (int64_t kw = 0; kw < K; ++kw) {
                const int64_t ih = oh * ST - P + kh, iw = ow * ST - P + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x(b, ic, ih, iw) * w(oc, ic, kh, kw);
              }
          y(b, oc, oh, ow) = acc;
        }
  return y;
}

/// Whole-model forward by naive per-layer loops.
inline Tensor model_forward_naive(const Model& m, const Tensor& input) {
  Tensor x = input;
  for (const LayerSpec& s : m.layers) {
    switch (s.kind) {
      case LayerKind::Conv2d:
        x = conv2d_naive(s, x, m.param(s.name + ".weight"), m.param(s.name + ".bias"));
        break;
      case LayerKind::Relu: {
        Tensor y = Tensor::zeros_like(x);
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::max(0.0, x[i]);
        x = y;
        break;
      }
      case LayerKind::MaxPool2d: {
        const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int64_t K = s.pool_size, ST = s.pool_stride;
        const int64_t OH = (H - K) / ST + 1, OW = (W - K) / ST + 1;
        Tensor y({B, C, OH, OW});
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t oh = 0; oh < OH; ++oh)
              for (int64_t ow = 0; ow < OW; ++ow) {
                double best = -1e300;
                for (int64_t kh = 0; kh < K; ++kh)
                  for (int64_t kw = 0; kw < K; ++kw)
                    best = std::max(best, x(b, c, oh * ST + kh, ow * ST + kw));
                y(b, c, oh, ow) = best;
              }
        x = y;
        break;
      }
      case LayerKind::AvgPool2d: {
        const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int64_t K = s.pool_size, ST = s.pool_stride;
        const int64_t OH = (H - K) / ST + 1, OW = (W - K) / ST + 1;
        Tensor y({B, C, OH, OW});
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t oh = 0; oh < OH; ++oh)
              for (int64_t ow = 0; ow < OW; ++ow) {
                double acc = 0.0;
                for (int64_t kh = 0; kh < K; ++kh)
                  for (int64_t kw = 0; kw < K; ++kw) acc += x(b, c, oh * ST + kh, ow * ST + kw);
                y(b, c, oh, ow) = acc / static_cast<double>(K * K);
              }
        x = y;
        break;
      }
      case LayerKind::Flatten:
        x = x.reshaped({x.dim(0), x.numel() / x.dim(0)});
        break;
      case LayerKind::Linear: {
        const int64_t B = x.dim(0);
        Tensor y({B, s.out_features});
        const Tensor& w = m.param(s.name + ".weight");
        const Tensor& bias = m.param(s.name + ".bias");
        for (int64_t b = 0; b < B; ++b)
          for (int64_t o = 0; o < s.out_features; ++o) {
            double acc = bias(o);
            for (int64_t i = 0; i < s.in_features; ++i) acc += x(b, i) * w(o, i);
            y(b, o) = acc;
          }
        x = y;
        break;
      }
    }
  }
  return x;
}

/// Central finite differences of a scalar loss over every parameter.
/// Returns the largest relative error against the supplied analytic grads.
inline double max_grad_check_error(Model& m, const std::function<double()>& loss_fn,
                                   const lateralgrad::Gradients& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (auto& [name, w] : m.params) {
    const Tensor& g = analytic.at(name);
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double lp = loss_fn();
      w[i] = orig - h;
      const double lm = loss_fn();
      w[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      worst = std::max(worst, rel_err(g[i], fd, 1e-5));
    }
  }
  return worst;
}

/// Quadruple-loop zero-padded "same" cross-correlation.
inline Tensor conv_same_naive(const Tensor& m, const Tensor& kernel) {
  const int64_t U = m.dim(0), V = m.dim(1), S = kernel.dim(0), R = S / 2;
  Tensor out({U, V});
  for (int64_t i = 0; i < U; ++i)
    for (int64_t j = 0; j < V; ++j) {
      double acc = 0.0;
      for (int64_t kh = 0; kh < S; ++kh)
        for (int64_t kw = 0; kw < S; ++kw) {
          const int64_t ii = i + kh - R, jj = j + kw - R;
          if (ii < 0 || ii >= U || jj < 0 || jj >= V) continue;
          acc += m(ii, jj) * kernel(kh, kw);
        }
      out(i, j) = acc;
    }
  return out;
}

}  // namespace oracle
