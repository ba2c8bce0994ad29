#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lateralgrad/model.hpp"
#include "lateralgrad/tensor.hpp"
#include "lateralgrad/training.hpp"

namespace lateralgrad {

enum class PruneScope : uint8_t { Layerwise = 0, Global = 1 };

std::string prune_scope_name(PruneScope s);

struct PruneReportRow {
  double prune_fraction = 0.0;
  PruneScope scope = PruneScope::Layerwise;
  double val_acc = 0.0;
};

struct AttackReportRow {
  double epsilon = 0.0;
  double adv_acc = 0.0;
  int64_t n_samples = 0;
};

/// One-shot L1 magnitude pruning: zero the floor(fraction*n) weights with
/// the smallest absolute value, ranked per layer or in one global pool.
/// Ties break toward the earlier (parameter name, flat index). Biases are
/// never pruned; no structural removal.
Model prune_l1(const Model& model, double fraction, PruneScope scope);

int64_t count_zero_prunable_weights(const Model& model);
int64_t count_prunable_weights(const Model& model);

/// FGSM step on one normalized image (C x H x W or 1 x C x H x W):
/// x + epsilon * sign(dL/dx), clipped per channel. sign(0) is 0.
Tensor fgsm(const Model& model, const Tensor& image, int label, double epsilon,
            const std::vector<double>& clip_min, const std::vector<double>& clip_max);

/// Indices of samples the model classifies correctly.
std::vector<int64_t> correctly_predicted(const Model& model, const LabeledData& data,
                                         int64_t batch_size = 256);

/// Accuracy under FGSM for each epsilon, on the given evaluation subset
/// (already restricted to commonly-correct samples; at epsilon 0 the
/// accuracy is 1 by construction). Throws if the subset is empty.
std::vector<AttackReportRow> eval_under_attack(const Model& model, const LabeledData& data,
                                               const std::vector<int64_t>& subset,
                                               const std::vector<double>& epsilons,
                                               const std::vector<double>& clip_min,
                                               const std::vector<double>& clip_max,
                                               int64_t batch_size = 128);

}  // namespace lateralgrad
