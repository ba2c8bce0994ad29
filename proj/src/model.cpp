#include "lateralgrad/model.hpp"

#include <cmath>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "maxpool";
    case LayerKind::AvgPool2d: return "avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

Tensor& Model::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

const Tensor& Model::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

bool Model::layer_output_is_spatial(int layer_id) const {
  const auto& s = output_shapes[static_cast<size_t>(layer_id)];
  const auto& k = layers[static_cast<size_t>(layer_id)].kind;
  return k != LayerKind::Flatten && k != LayerKind::Linear && s[1] > 0 && s[2] > 0;
}

std::vector<int> Model::conv_block_outputs() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind != LayerKind::Conv2d) continue;
    if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::Relu)
      out.push_back(static_cast<int>(i + 1));
    else
      out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> Model::default_masked_layers() const {
  std::vector<int> blocks = conv_block_outputs();
  if (blocks.size() <= 2) return {};
  blocks.resize(blocks.size() - 2);
  return blocks;
}

ModelBuilder::ModelBuilder(int64_t channels, int64_t height, int64_t width)
    : input_shape_{channels, height, width} {
  if (channels < 1 || height < 1 || width < 1)
    throw ConfigError("model input shape must be positive");
}

ModelBuilder& ModelBuilder::conv2d(int64_t out_channels, int64_t kernel, int64_t stride,
                                   int64_t pad) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  layers_.push_back(s);
  return *this;
}

ModelBuilder& ModelBuilder::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  layers_.push_back(s);
  return *this;
}

ModelBuilder& ModelBuilder::maxpool(int64_t size, int64_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.pool_size = size;
  s.pool_stride = stride == 0 ? size : stride;
  layers_.push_back(s);
  return *this;
}

ModelBuilder& ModelBuilder::avgpool(int64_t size, int64_t stride) {
  LayerSpec s;
  s.kind = LayerKind::AvgPool2d;
  s.pool_size = size;
  s.pool_stride = stride == 0 ? size : stride;
  layers_.push_back(s);
  return *this;
}

ModelBuilder& ModelBuilder::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  layers_.push_back(s);
  return *this;
}

ModelBuilder& ModelBuilder::linear(int64_t out_features) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.out_features = out_features;
  layers_.push_back(s);
  return *this;
}

static Tensor he_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

static Tensor bias_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Model Model_build_impl(const std::array<int64_t, 3>& input_shape, std::vector<LayerSpec> layers,
                       Rng& rng) {
  Model m;
  m.input_shape = input_shape;
  int64_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  bool flat = false;
  int conv_idx = 0, fc_idx = 0;
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& s = layers[i];
    std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(s.kind) + ")";
    switch (s.kind) {
      case LayerKind::Conv2d: {
        if (flat) throw ConfigError(where + ": conv after flatten");
        if (s.kernel < 1 || s.stride < 1 || s.pad < 0 || s.out_channels < 1)
          throw ConfigError(where + ": bad conv geometry");
        s.in_channels = c;
        int64_t oh = (h + 2 * s.pad - s.kernel) / s.stride + 1;
        int64_t ow = (w + 2 * s.pad - s.kernel) / s.stride + 1;
        if (oh < 1 || ow < 1)
          throw ConfigError(where + ": kernel " + std::to_string(s.kernel) +
                            " does not fit input " + std::to_string(h) + "x" + std::to_string(w));
        s.name = "conv" + std::to_string(conv_idx++);
        const int64_t fan_in = s.in_channels * s.kernel * s.kernel;
        m.params[s.name + ".weight"] =
            he_uniform({s.out_channels, s.in_channels, s.kernel, s.kernel}, fan_in, rng);
        // nonzero bias keeps dead-patch outputs off the exact relu kink
        m.params[s.name + ".bias"] = bias_uniform({s.out_channels}, fan_in, rng);
        c = s.out_channels;
        h = oh;
        w = ow;
        break;
      }
      case LayerKind::Relu:
        break;  // elementwise, shape unchanged
      case LayerKind::MaxPool2d:
      case LayerKind::AvgPool2d: {
        if (flat) throw ConfigError(where + ": pool after flatten");
        if (s.pool_size < 1 || s.pool_stride < 1) throw ConfigError(where + ": bad pool geometry");
        if (s.pool_size > h || s.pool_size > w)
          throw ConfigError(where + ": pool window does not fit " + std::to_string(h) + "x" +
                            std::to_string(w));
        int64_t oh = (h - s.pool_size) / s.pool_stride + 1;
        int64_t ow = (w - s.pool_size) / s.pool_stride + 1;
        if (oh < 1 || ow < 1)
          throw ConfigError(where + ": pool window does not fit " + std::to_string(h) + "x" +
                            std::to_string(w));
        h = oh;
        w = ow;
        break;
      }
      case LayerKind::Flatten:
        if (flat) throw ConfigError(where + ": double flatten");
        c = c * h * w;
        h = 1;
        w = 1;
        flat = true;
        break;
      case LayerKind::Linear: {
        if (!flat && (h != 1 || w != 1)) throw ConfigError(where + ": linear before flatten");
        if (s.out_features < 1) throw ConfigError(where + ": bad feature count");
        s.in_features = c;
        s.name = "fc" + std::to_string(fc_idx++);
        m.params[s.name + ".weight"] =
            he_uniform({s.out_features, s.in_features}, s.in_features, rng);
        m.params[s.name + ".bias"] = bias_uniform({s.out_features}, s.in_features, rng);
        c = s.out_features;
        flat = true;
        break;
      }
    }
    // Flattened outputs record {F, 0, 0}; a zero spatial extent marks the
    // layer as non-maskable.
    m.output_shapes.push_back({c, flat ? 0 : h, flat ? 0 : w});
  }
  if (layers.empty()) throw ConfigError("model has no layers");
  m.layers = std::move(layers);
  m.num_classes = c;
  return m;
}

Model ModelBuilder::build(Rng& rng) const { return Model_build_impl(input_shape_, layers_, rng); }

}  // namespace lateralgrad
