#include "lateralgrad/optim.hpp"

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

SgdOptimizer::SgdOptimizer(double lr, double momentum, double weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
}

void SgdOptimizer::step(std::map<std::string, Tensor>& params, const Gradients& grads) {
  for (auto& [name, w] : params) {
    const Tensor& g = grads.at(name);
    if (!g.same_shape(w)) throw UsageError("gradient shape mismatch for " + name);
    auto [it, inserted] = velocity_.try_emplace(name, Tensor::zeros_like(w));
    Tensor& v = it->second;
    double* vd = v.data();
    double* wd = w.data();
    const double* gd = g.data();
    for (int64_t i = 0; i < w.numel(); ++i) {
      vd[i] = momentum_ * vd[i] + gd[i] + weight_decay_ * wd[i];
      wd[i] -= lr_ * vd[i];
    }
  }
}

}  // namespace lateralgrad
