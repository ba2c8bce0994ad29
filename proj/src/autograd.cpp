#include "lateralgrad/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lateralgrad/errors.hpp"
#include "lateralgrad/parallel.hpp"

namespace lateralgrad {

const Tensor& Tape::activation_grad(int layer_id) const {
  if (!backward_done) throw UsageError("activation_grad before backward");
  return value_grads[static_cast<size_t>(layer_id) + 1];
}

Tensor& Gradients::at(const std::string& name) {
  auto it = by_param.find(name);
  if (it == by_param.end()) throw UsageError("no gradient for parameter: " + name);
  return it->second;
}

const Tensor& Gradients::at(const std::string& name) const {
  auto it = by_param.find(name);
  if (it == by_param.end()) throw UsageError("no gradient for parameter: " + name);
  return it->second;
}

void Gradients::accumulate(const Gradients& other) {
  for (const auto& [name, g] : other.by_param) {
    auto it = by_param.find(name);
    if (it == by_param.end())
      by_param.emplace(name, g);
    else
      it->second += g;
  }
}

namespace {

// ---- forward kernels ------------------------------------------------------

Tensor conv2d_forward(const LayerSpec& s, const Tensor& x, const Tensor& w, const Tensor& bias) {
  const int64_t B = x.dim(0), IC = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t OC = s.out_channels, K = s.kernel, ST = s.stride, P = s.pad;
  const int64_t OH = (H + 2 * P - K) / ST + 1;
  const int64_t OW = (W + 2 * P - K) / ST + 1;
  Tensor y({B, OC, OH, OW});
  const double* xd = x.data();
  const double* wd = w.data();
  const double* bd = bias.data();
  double* yd = y.data();
  parallel_for(B, [&](int64_t b) {
    const double* xb = xd + b * IC * H * W;
    double* yb = yd + b * OC * OH * OW;
    for (int64_t oc = 0; oc < OC; ++oc) {
      const double* woc = wd + oc * IC * K * K;
      for (int64_t oh = 0; oh < OH; ++oh) {
        const int64_t ih0 = oh * ST - P;
        const int64_t kh_lo = std::max<int64_t>(0, -ih0);
        const int64_t kh_hi = std::min<int64_t>(K, H - ih0);
        for (int64_t ow = 0; ow < OW; ++ow) {
          const int64_t iw0 = ow * ST - P;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(K, W - iw0);
          double acc = bd[oc];
          for (int64_t ic = 0; ic < IC; ++ic) {
            const double* xc = xb + ic * H * W;
            const double* wc = woc + ic * K * K;
            for (int64_t kh = kh_lo; kh < kh_hi; ++kh) {
              const double* xrow = xc + (ih0 + kh) * W + iw0;
              const double* wrow = wc + kh * K;
              for (int64_t kw = kw_lo; kw < kw_hi; ++kw) acc += xrow[kw] * wrow[kw];
            }
          }
          yb[(oc * OH + oh) * OW + ow] = acc;
        }
      }
    }
  });
  return y;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  const double* xd = x.data();
  double* yd = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return y;
}

Tensor maxpool_forward(const LayerSpec& s, const Tensor& x, Tensor& argmax) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = s.pool_size, ST = s.pool_stride;
  const int64_t OH = (H - K) / ST + 1, OW = (W - K) / ST + 1;
  Tensor y({B, C, OH, OW});
  argmax = Tensor({B, C, OH, OW});
  const double* xd = x.data();
  double* yd = y.data();
  double* ad = argmax.data();
  parallel_for(B, [&](int64_t b) {
    for (int64_t c = 0; c < C; ++c) {
      const double* xc = xd + (b * C + c) * H * W;
      double* yc = yd + (b * C + c) * OH * OW;
      double* ac = ad + (b * C + c) * OH * OW;
      for (int64_t oh = 0; oh < OH; ++oh) {
        for (int64_t ow = 0; ow < OW; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = 0;
          for (int64_t kh = 0; kh < K; ++kh) {
            for (int64_t kw = 0; kw < K; ++kw) {
              const int64_t ih = oh * ST + kh, iw = ow * ST + kw;
              const double v = xc[ih * W + iw];
              if (v > best) {  // first occurrence wins ties
                best = v;
                best_idx = ih * W + iw;
              }
            }
          }
          yc[oh * OW + ow] = best;
          // stored as within-sample flat index c*H*W + ih*W + iw
          ac[oh * OW + ow] = static_cast<double>(c * H * W + best_idx);
        }
      }
    }
  });
  return y;
}

Tensor avgpool_forward(const LayerSpec& s, const Tensor& x) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = s.pool_size, ST = s.pool_stride;
  const int64_t OH = (H - K) / ST + 1, OW = (W - K) / ST + 1;
  const double inv = 1.0 / static_cast<double>(K * K);
  Tensor y({B, C, OH, OW});
  const double* xd = x.data();
  double* yd = y.data();
  parallel_for(B, [&](int64_t b) {
    for (int64_t c = 0; c < C; ++c) {
      const double* xc = xd + (b * C + c) * H * W;
      double* yc = yd + (b * C + c) * OH * OW;
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) acc += xc[(oh * ST + kh) * W + ow * ST + kw];
          yc[oh * OW + ow] = acc * inv;
        }
    }
  });
  return y;
}

Tensor linear_forward(const LayerSpec& s, const Tensor& x, const Tensor& w, const Tensor& bias) {
  const int64_t B = x.dim(0), IF = s.in_features, OF = s.out_features;
  Tensor y({B, OF});
  const double* xd = x.data();
  const double* wd = w.data();
  const double* bd = bias.data();
  double* yd = y.data();
  parallel_for(B, [&](int64_t b) {
    const double* xb = xd + b * IF;
    double* yb = yd + b * OF;
    for (int64_t o = 0; o < OF; ++o) {
      const double* wo = wd + o * IF;
      double acc = bd[o];
      for (int64_t i = 0; i < IF; ++i) acc += xb[i] * wo[i];
      yb[o] = acc;
    }
  });
  return y;
}

// ---- backward kernels ------------------------------------------------------

Tensor conv2d_backward_input(const LayerSpec& s, const Tensor& g, const Tensor& w,
                             const std::vector<int64_t>& in_shape) {
  const int64_t B = g.dim(0), OC = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  const int64_t IC = in_shape[1], H = in_shape[2], W = in_shape[3];
  const int64_t K = s.kernel, ST = s.stride, P = s.pad;
  Tensor gx(std::vector<int64_t>{B, IC, H, W});
  const double* gd = g.data();
  const double* wd = w.data();
  double* gxd = gx.data();
  parallel_for(B, [&](int64_t b) {
    const double* gb = gd + b * OC * OH * OW;
    double* gxb = gxd + b * IC * H * W;
    for (int64_t oc = 0; oc < OC; ++oc) {
      const double* woc = wd + oc * IC * K * K;
      for (int64_t oh = 0; oh < OH; ++oh) {
        const int64_t ih0 = oh * ST - P;
        const int64_t kh_lo = std::max<int64_t>(0, -ih0);
        const int64_t kh_hi = std::min<int64_t>(K, H - ih0);
        for (int64_t ow = 0; ow < OW; ++ow) {
          const int64_t iw0 = ow * ST - P;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(K, W - iw0);
          const double go = gb[(oc * OH + oh) * OW + ow];
          if (go == 0.0) continue;
          for (int64_t ic = 0; ic < IC; ++ic) {
            double* gxc = gxb + ic * H * W;
            const double* wc = woc + ic * K * K;
            for (int64_t kh = kh_lo; kh < kh_hi; ++kh) {
              double* gxrow = gxc + (ih0 + kh) * W + iw0;
              const double* wrow = wc + kh * K;
              for (int64_t kw = kw_lo; kw < kw_hi; ++kw) gxrow[kw] += go * wrow[kw];
            }
          }
        }
      }
    }
  });
  return gx;
}

void conv2d_backward_params(const LayerSpec& s, const Tensor& g, const Tensor& x, Tensor& gw,
                            Tensor& gb) {
  const int64_t B = g.dim(0), OC = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  const int64_t IC = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = s.kernel, ST = s.stride, P = s.pad;
  gw = Tensor({OC, IC, K, K});
  gb = Tensor({OC});
  const double* gd = g.data();
  const double* xd = x.data();
  double* gwd = gw.data();
  double* gbd = gb.data();
  // One task per output channel: every write lands in that channel's slice,
  // and the in-task loops accumulate over the batch in fixed order.
  parallel_for(OC, [&](int64_t oc) {
    double* gwoc = gwd + oc * IC * K * K;
    double bias_acc = 0.0;
    for (int64_t b = 0; b < B; ++b) {
      const double* gb_ = gd + (b * OC + oc) * OH * OW;
      const double* xb = xd + b * IC * H * W;
      for (int64_t oh = 0; oh < OH; ++oh) {
        const int64_t ih0 = oh * ST - P;
        const int64_t kh_lo = std::max<int64_t>(0, -ih0);
        const int64_t kh_hi = std::min<int64_t>(K, H - ih0);
        for (int64_t ow = 0; ow < OW; ++ow) {
          const int64_t iw0 = ow * ST - P;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(K, W - iw0);
          const double go = gb_[oh * OW + ow];
          bias_acc += go;
          if (go == 0.0) continue;
          for (int64_t ic = 0; ic < IC; ++ic) {
            const double* xc = xb + ic * H * W;
            double* gwc = gwoc + ic * K * K;
            for (int64_t kh = kh_lo; kh < kh_hi; ++kh) {
              const double* xrow = xc + (ih0 + kh) * W + iw0;
              double* gwrow = gwc + kh * K;
              for (int64_t kw = kw_lo; kw < kw_hi; ++kw) gwrow[kw] += go * xrow[kw];
            }
          }
        }
      }
    }
    gbd[oc] = bias_acc;
  });
}

Tensor relu_backward(const Tensor& g, const Tensor& x) {
  Tensor gx = Tensor::zeros_like(g);
  const double* gd = g.data();
  const double* xd = x.data();
  double* gxd = gx.data();
  // derivative at exactly 0 is 0
  for (int64_t i = 0; i < g.numel(); ++i) gxd[i] = xd[i] > 0.0 ? gd[i] : 0.0;
  return gx;
}

Tensor maxpool_backward(const Tensor& g, const Tensor& argmax, const std::vector<int64_t>& in_shape) {
  const int64_t B = g.dim(0);
  const int64_t per_sample = in_shape[1] * in_shape[2] * in_shape[3];
  const int64_t out_per_sample = g.numel() / B;
  Tensor gx(std::vector<int64_t>{B, in_shape[1], in_shape[2], in_shape[3]});
  const double* gd = g.data();
  const double* ad = argmax.data();
  double* gxd = gx.data();
  // Overlapping windows can hit the same input cell; keep the per-sample
  // scatter serial so accumulation order is fixed.
  parallel_for(B, [&](int64_t b) {
    const double* gb = gd + b * out_per_sample;
    const double* ab = ad + b * out_per_sample;
    double* gxb = gxd + b * per_sample;
    for (int64_t i = 0; i < out_per_sample; ++i)
      gxb[static_cast<int64_t>(ab[i])] += gb[i];
  });
  return gx;
}

Tensor avgpool_backward(const LayerSpec& s, const Tensor& g, const std::vector<int64_t>& in_shape) {
  const int64_t B = g.dim(0), C = g.dim(1), OH = g.dim(2), OW = g.dim(3);
  const int64_t H = in_shape[2], W = in_shape[3];
  const int64_t K = s.pool_size, ST = s.pool_stride;
  const double inv = 1.0 / static_cast<double>(K * K);
  Tensor gx(std::vector<int64_t>{B, C, H, W});
  const double* gd = g.data();
  double* gxd = gx.data();
  parallel_for(B, [&](int64_t b) {
    for (int64_t c = 0; c < C; ++c) {
      const double* gc = gd + (b * C + c) * OH * OW;
      double* gxc = gxd + (b * C + c) * H * W;
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          const double v = gc[oh * OW + ow] * inv;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) gxc[(oh * ST + kh) * W + ow * ST + kw] += v;
        }
    }
  });
  return gx;
}

Tensor linear_backward_input(const LayerSpec& s, const Tensor& g, const Tensor& w) {
  const int64_t B = g.dim(0), IF = s.in_features, OF = s.out_features;
  Tensor gx({B, IF});
  const double* gd = g.data();
  const double* wd = w.data();
  double* gxd = gx.data();
  parallel_for(B, [&](int64_t b) {
    const double* gb = gd + b * OF;
    double* gxb = gxd + b * IF;
    for (int64_t o = 0; o < OF; ++o) {
      const double go = gb[o];
      if (go == 0.0) continue;
      const double* wo = wd + o * IF;
      for (int64_t i = 0; i < IF; ++i) gxb[i] += go * wo[i];
    }
  });
  return gx;
}

void linear_backward_params(const LayerSpec& s, const Tensor& g, const Tensor& x, Tensor& gw,
                            Tensor& gb) {
  const int64_t B = g.dim(0), IF = s.in_features, OF = s.out_features;
  gw = Tensor({OF, IF});
  gb = Tensor({OF});
  const double* gd = g.data();
  const double* xd = x.data();
  double* gwd = gw.data();
  double* gbd = gb.data();
  parallel_for(OF, [&](int64_t o) {
    double* gwo = gwd + o * IF;
    double bias_acc = 0.0;
    for (int64_t b = 0; b < B; ++b) {
      const double go = gd[b * OF + o];
      bias_acc += go;
      if (go == 0.0) continue;
      const double* xb = xd + b * IF;
      for (int64_t i = 0; i < IF; ++i) gwo[i] += go * xb[i];
    }
    gbd[o] = bias_acc;
  });
}

}  // namespace

Tape forward(const Model& model, const Tensor& input) {
  if (input.ndim() != 4)
    throw ConfigError("forward expects B x C x H x W input, got " + input.shape_str());
  if (input.dim(1) != model.input_shape[0] || input.dim(2) != model.input_shape[1] ||
      input.dim(3) != model.input_shape[2])
    throw ConfigError("input " + input.shape_str() + " does not match model input C=" +
                      std::to_string(model.input_shape[0]) + " H=" +
                      std::to_string(model.input_shape[1]) + " W=" +
                      std::to_string(model.input_shape[2]) + " at layer 0 (" +
                      layer_kind_name(model.layers[0].kind) + ")");
  const int64_t B = input.dim(0);
  Tape tape;
  tape.values.reserve(model.layers.size() + 1);
  tape.values.push_back(input);
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& s = model.layers[i];
    const Tensor& x = tape.values.back();
    TapeNode node;
    node.layer_id = static_cast<int>(i);
    node.input_value = static_cast<int>(tape.values.size()) - 1;
    Tensor y;
    switch (s.kind) {
      case LayerKind::Conv2d:
        y = conv2d_forward(s, x, model.param(s.name + ".weight"), model.param(s.name + ".bias"));
        break;
      case LayerKind::Relu:
        y = relu_forward(x);
        break;
      case LayerKind::MaxPool2d:
        y = maxpool_forward(s, x, node.aux);
        break;
      case LayerKind::AvgPool2d:
        y = avgpool_forward(s, x);
        break;
      case LayerKind::Flatten:
        y = x.reshaped({B, x.numel() / B});
        break;
      case LayerKind::Linear:
        y = linear_forward(s, x, model.param(s.name + ".weight"), model.param(s.name + ".bias"));
        break;
    }
    tape.values.push_back(std::move(y));
    node.output_value = static_cast<int>(tape.values.size()) - 1;
    tape.nodes.push_back(std::move(node));
  }
  return tape;
}

Gradients backward(const Model& model, Tape& tape, const Tensor& loss_grad) {
  if (tape.backward_done) throw UsageError("backward called twice on one tape");
  if (!loss_grad.same_shape(tape.output()))
    throw UsageError("loss gradient " + loss_grad.shape_str() + " does not match output " +
                     tape.output().shape_str());
  tape.backward_done = true;
  tape.value_grads.assign(tape.values.size(), Tensor());

  Gradients grads;
  Tensor g = loss_grad;
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    const TapeNode& node = *it;
    const LayerSpec& s = model.layers[static_cast<size_t>(node.layer_id)];
    auto hook = tape.hooks.find(node.layer_id);
    if (hook != tape.hooks.end()) g = hook->second(g, node.layer_id);
    tape.value_grads[static_cast<size_t>(node.output_value)] = g;
    const Tensor& x = tape.values[static_cast<size_t>(node.input_value)];
    switch (s.kind) {
      case LayerKind::Conv2d: {
        Tensor gw, gb;
        conv2d_backward_params(s, g, x, gw, gb);
        grads.by_param[s.name + ".weight"] = std::move(gw);
        grads.by_param[s.name + ".bias"] = std::move(gb);
        g = conv2d_backward_input(s, g, model.param(s.name + ".weight"), x.shape());
        break;
      }
      case LayerKind::Relu:
        g = relu_backward(g, x);
        break;
      case LayerKind::MaxPool2d:
        g = maxpool_backward(g, node.aux, x.shape());
        break;
      case LayerKind::AvgPool2d:
        g = avgpool_backward(s, g, x.shape());
        break;
      case LayerKind::Flatten:
        g = g.reshaped(x.shape());
        break;
      case LayerKind::Linear: {
        Tensor gw, gb;
        linear_backward_params(s, g, x, gw, gb);
        grads.by_param[s.name + ".weight"] = std::move(gw);
        grads.by_param[s.name + ".bias"] = std::move(gb);
        g = linear_backward_input(s, g, model.param(s.name + ".weight"));
        break;
      }
    }
  }
  tape.value_grads.front() = std::move(g);
  return grads;
}

std::vector<Gradients> per_sample_gradients(const Model& model, const Tape& tape,
                                            const Tensor& per_sample_seeds,
                                            const std::vector<std::string>& param_filter) {
  const int64_t B = tape.batch_size();
  if (per_sample_seeds.dim(0) != B)
    throw UsageError("per-sample seeds batch " + per_sample_seeds.shape_str() +
                     " does not match tape batch " + std::to_string(B));
  std::vector<Gradients> out(static_cast<size_t>(B));
  parallel_for(B, [&](int64_t b) {
    Tape sample;
    sample.nodes = tape.nodes;
    sample.hooks = tape.hooks;
    sample.values.reserve(tape.values.size());
    for (const Tensor& v : tape.values) sample.values.push_back(slice_leading(v, b));
    for (auto& node : sample.nodes)
      if (!node.aux.empty()) node.aux = slice_leading(node.aux, b);
    Gradients g = backward(model, sample, slice_leading(per_sample_seeds, b));
    if (!param_filter.empty()) {
      Gradients kept;
      for (const auto& name : param_filter) kept.by_param[name] = std::move(g.at(name));
      g = std::move(kept);
    }
    out[static_cast<size_t>(b)] = std::move(g);
  });
  return out;
}

LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw UsageError("labels count does not match batch size");
  LossResult r;
  r.per_sample.resize(static_cast<size_t>(B));
  r.grad = Tensor({B, K});
  r.softmax = Tensor({B, K});
  const double* ld = logits.data();
  double* gd = r.grad.data();
  double* sd = r.softmax.data();
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= K) throw UsageError("label " + std::to_string(y) + " out of range");
    const double* row = ld + b * K;
    double m = row[0];
    for (int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double sum = 0.0;
    for (int64_t k = 0; k < K; ++k) sum += std::exp(row[k] - m);
    const double lse = m + std::log(sum);
    r.per_sample[static_cast<size_t>(b)] = lse - row[y];
    total += lse - row[y];
    for (int64_t k = 0; k < K; ++k) {
      const double p = std::exp(row[k] - lse);
      sd[b * K + k] = p;
      gd[b * K + k] = (p - (k == y ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }
  r.loss = total / static_cast<double>(B);
  return r;
}

Tensor per_sample_loss_seeds(const LossResult& loss, const std::vector<int>& labels) {
  Tensor seeds = loss.softmax;
  const int64_t B = seeds.dim(0), K = seeds.dim(1);
  for (int64_t b = 0; b < B; ++b) seeds(b, labels[static_cast<size_t>(b)]) -= 1.0;
  (void)K;
  return seeds;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int64_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    int best = 0;
    for (int64_t k = 1; k < K; ++k)
      if (logits(b, k) > logits(b, best)) best = static_cast<int>(k);
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

}  // namespace lateralgrad
