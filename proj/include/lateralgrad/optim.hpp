#pragma once

#include <map>
#include <string>

#include "lateralgrad/autograd.hpp"
#include "lateralgrad/model.hpp"

namespace lateralgrad {

/// SGD with classic momentum and decoupled-from-nothing weight decay folded
/// into the gradient: v <- m*v + g + wd*w, w <- w - lr*v. Velocity persists
/// across calls and is checkpointable.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay);

  void step(std::map<std::string, Tensor>& params, const Gradients& grads);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  std::map<std::string, Tensor>& velocity() { return velocity_; }
  const std::map<std::string, Tensor>& velocity() const { return velocity_; }

 private:
  double lr_, momentum_, weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace lateralgrad
