#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/optim.hpp"
#include "lateralgrad/rng.hpp"

namespace lateralgrad {

enum class AblationMode : uint8_t { None = 0, WithoutLi = 1, WithoutMinicolumn = 2 };
enum class MaskScope : uint8_t { PerSample = 0, PerBatch = 1 };

std::string ablation_mode_name(AblationMode m);

struct TrainConfig {
  int64_t epochs = 1;
  int64_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  std::optional<MaskConfig> mask;
  AblationMode ablation = AblationMode::None;
  MaskScope mask_scope = MaskScope::PerSample;  // Algorithm-1 "for one sample" default
  int64_t gsnr_every = 0;  // measure GSNR on every Nth batch; 0 disables
};

struct EpochRow {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;  // reported via manifest, never in CSV data rows
};

struct MaskStatRow {
  int64_t epoch = 0;
  int layer_id = -1;
  double mean_inhibited_fraction = 0.0;
};

struct GsnrRow {
  int64_t epoch = 0;
  std::string layer;  // parameter group, e.g. "conv0"
  double mean_gsnr = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

struct TrainLog {
  std::vector<EpochRow> epochs;
  std::vector<MaskStatRow> mask_stats;
  std::vector<GsnrRow> gsnr;
};

struct LabeledData {
  Tensor images;  // N x C x H x W
  std::vector<int> labels;
  int64_t size() const { return images.empty() ? 0 : images.dim(0); }
};

/// Elementwise mask application for one sample: every channel c of grad is
/// multiplied by the mask of the set containing c. No renormalization.
Tensor apply_gradient_mask(const Tensor& grad_cuv, const GradientMask& masks);

/// Optional capture of what a mask hook did during one backward pass.
struct MaskHookRecord {
  Tensor pre_grad;                            // incoming batch gradient
  std::vector<GradientMask> sample_masks;     // one entry per sample
};

/// The backward-pass interceptor realizing the gradient mask: computes
/// per-sample (or batch-mean) masks from the incoming activation gradient of
/// its layer and zeroes the inhibited positions. Stateless across batches
/// except for the inhibited-count tally.
class MaskHookState {
 public:
  MaskHookState(const Model& model, const MaskConfig& cfg, AblationMode ablation, MaskScope scope);

  /// Installs hooks for every configured layer onto the tape.
  void install(Tape& tape) const;

  Tensor apply(const Tensor& grad, int layer_id) const;

  /// Mean inhibited fraction per layer since the last reset.
  std::vector<std::pair<int, double>> inhibited_fractions() const;
  void reset_stats();

  /// When set, apply() records pre-hook gradients and masks here (test aid).
  void set_record(std::map<int, MaskHookRecord>* sink) { record_ = sink; }

 private:
  struct LayerPlan {
    int layer_id;
    Tensor kernel;
    int64_t channels;
  };
  const LayerPlan& plan_for(int layer_id) const;

  MaskConfig cfg_;
  AblationMode ablation_;
  MaskScope scope_;
  std::vector<LayerPlan> plans_;
  mutable std::vector<std::pair<int, std::pair<int64_t, int64_t>>> tallies_;  // layer -> (zeros, total)
  std::map<int, MaskHookRecord>* record_ = nullptr;
};

/// Validates mask wiring against the model (spatial outputs, K divides C)
/// and resolves an empty layer list to the model default placement.
MaskConfig resolve_mask_config(const Model& model, MaskConfig cfg);

/// Full training run. Uses the caller's optimizer and shuffle rng so runs
/// can be checkpointed and resumed deterministically. first_epoch shifts the
/// epoch numbering when resuming.
TrainLog train(Model& model, const LabeledData& train_data, const LabeledData& val_data,
               const TrainConfig& cfg, SgdOptimizer& opt, Rng& shuffle_rng,
               int64_t first_epoch = 0);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  int64_t n = 0;
};

EvalResult evaluate(const Model& model, const LabeledData& data, int64_t batch_size = 256);

}  // namespace lateralgrad
