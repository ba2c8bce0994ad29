#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lateralgrad/model.hpp"
#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

/// Transforms the activation gradient of one layer mid-backprop. Receives
/// the full batch gradient (B x C x u x v for spatial layers) and the layer
/// id; whatever it returns flows upstream and is what the tape retains.
using GradHook = std::function<Tensor(const Tensor& grad, int layer_id)>;

struct TapeNode {
  int layer_id = -1;
  int input_value = -1;
  int output_value = -1;
  Tensor aux;  // maxpool: within-sample argmax (flat c*H*W index) per output element
};

/// Record of one forward pass. Values are the input (id 0) plus each layer
/// output in order; backward consumes the tape exactly once and retains the
/// gradient of every value for later inspection.
struct Tape {
  std::vector<TapeNode> nodes;
  std::vector<Tensor> values;
  std::map<int, GradHook> hooks;  // layer id -> transform, applied once per backward
  std::vector<Tensor> value_grads;
  bool backward_done = false;

  const Tensor& output() const { return values.back(); }
  int64_t batch_size() const { return values.empty() ? 0 : values.front().dim(0); }

  /// Activation gradient retained for a layer (post-hook). Valid after backward.
  const Tensor& activation_grad(int layer_id) const;
  /// Gradient with respect to the network input. Valid after backward.
  const Tensor& input_grad() const { return value_grads.front(); }
};

struct Gradients {
  std::map<std::string, Tensor> by_param;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void accumulate(const Gradients& other);
};

/// Runs the model on a B x C x H x W batch, recording a tape.
Tape forward(const Model& model, const Tensor& input);

/// Reverse pass over a recorded tape. loss_grad must match the terminal
/// output shape. Returns dL/dparam for every parameter; per-layer activation
/// gradients (after any hook) stay on the tape. A second call throws.
Gradients backward(const Model& model, Tape& tape, const Tensor& loss_grad);

/// Per-sample parameter gradients: slices the tape into single-sample tapes
/// and runs backward on each with the corresponding seed row. Hooks on the
/// source tape are applied (to 1-sample batches). If param_filter is
/// non-empty only those parameters are kept.
std::vector<Gradients> per_sample_gradients(const Model& model, const Tape& tape,
                                            const Tensor& per_sample_seeds,
                                            const std::vector<std::string>& param_filter = {});

struct LossResult {
  double loss = 0.0;                    // mean over the batch
  std::vector<double> per_sample;      // unreduced per-sample losses
  Tensor grad;                          // d(mean loss)/d logits, B x K
  Tensor softmax;                       // row-wise softmax, B x K
};

/// Softmax cross-entropy with mean reduction.
LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Seed rows (softmax - onehot) for per-sample (unreduced) losses.
Tensor per_sample_loss_seeds(const LossResult& loss, const std::vector<int>& labels);

/// Row-wise argmax; first index wins ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace lateralgrad
