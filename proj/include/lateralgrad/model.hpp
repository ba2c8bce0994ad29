#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "lateralgrad/rng.hpp"
#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

enum class LayerKind : uint8_t { Conv2d = 0, Relu, MaxPool2d, AvgPool2d, Flatten, Linear };

std::string layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;  // parameter prefix; set for conv and linear layers
  int64_t in_channels = 0, out_channels = 0;
  int64_t kernel = 0, stride = 1, pad = 0;
  int64_t pool_size = 0, pool_stride = 0;
  int64_t in_features = 0, out_features = 0;
};

/// A fixed sequential CNN: layer specs, a named parameter store and the set
/// of layer ids whose activation gradients are masked during training.
/// Copyable by value; pruning and checkpointing rely on that.
struct Model {
  std::array<int64_t, 3> input_shape{0, 0, 0};  // C, H, W
  std::vector<LayerSpec> layers;
  // Per-layer output extents as C,H,W; flattened/linear outputs use {F,0,0}.
  std::vector<std::array<int64_t, 3>> output_shapes;
  std::map<std::string, Tensor> params;
  std::vector<int> masked_layer_ids;
  int64_t num_classes = 0;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  /// Layer ids that can host a gradient mask: 4-D (C x u x v) outputs.
  bool layer_output_is_spatial(int layer_id) const;

  /// One id per conv layer: the relu directly after it when present,
  /// otherwise the conv itself. These are the mask and saliency hook points.
  std::vector<int> conv_block_outputs() const;

  /// Default mask placement: every conv block output except the last two.
  std::vector<int> default_masked_layers() const;
};

/// Builds a model layer by layer, inferring channel/feature counts from the
/// input shape and initializing parameters (He-uniform) from the given rng.
class ModelBuilder {
 public:
  ModelBuilder(int64_t channels, int64_t height, int64_t width);

  ModelBuilder& conv2d(int64_t out_channels, int64_t kernel, int64_t stride = 1, int64_t pad = 0);
  ModelBuilder& relu();
  ModelBuilder& maxpool(int64_t size, int64_t stride = 0);  // stride 0 = size
  ModelBuilder& avgpool(int64_t size, int64_t stride = 0);
  ModelBuilder& flatten();
  ModelBuilder& linear(int64_t out_features);

  Model build(Rng& rng) const;

 private:
  std::array<int64_t, 3> input_shape_;
  std::vector<LayerSpec> layers_;
};

}  // namespace lateralgrad
