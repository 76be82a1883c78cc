#pragma once

#include <vector>

#include "saco/autograd/parameters.hpp"

namespace saco::optim {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long warmup_steps = 0;  // linear ramp from lr/warmup_steps to lr, then constant
};

// Adam with decoupled weight decay. Decay is applied to matrices only;
// biases, norm gains and other single-row tensors are exempt.
class AdamW {
 public:
  AdamW(const ad::ParameterStore& store, const AdamWConfig& config);

  // Applies one update from `grads`; returns the learning rate used.
  double step(ad::ParameterStore& store, const ad::GradientBuffer& grads);

  double lr_at(long step) const;
  long steps_taken() const { return step_; }

 private:
  AdamWConfig config_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  long step_ = 0;
};

// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_global_norm(ad::GradientBuffer& grads, double max_norm);

}  // namespace saco::optim
