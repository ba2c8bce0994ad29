#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/training.hpp"

namespace lateralgrad {

struct PruneMeta {
  double fraction = 0.0;
  std::string scope;  // "layerwise" | "global"
  int64_t zeroed = 0;
};

/// Everything needed to resume or evaluate a run. Round-trips bitwise,
/// including the RNG stream.
struct Checkpoint {
  uint32_t version = 1;
  Model model;
  std::map<std::string, Tensor> velocity;
  std::string rng_state;
  int64_t epochs_completed = 0;
  std::vector<double> norm_mean, norm_std;
  std::vector<double> clip_min, clip_max;
  std::optional<MaskConfig> mask;
  AblationMode ablation = AblationMode::None;
  MaskScope mask_scope = MaskScope::PerSample;
  std::optional<PruneMeta> prune;
};

/// Little-endian container: magic "LGRD", u32 version, then named
/// length-prefixed sections.
void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

std::vector<uint8_t> encode_checkpoint(const Checkpoint& cp);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);

}  // namespace lateralgrad
