#include "saco/optimizer.hpp"

#include <cmath>

#include "saco/error.hpp"

namespace saco::optim {

AdamW::AdamW(const ad::ParameterStore& store, const AdamWConfig& config) : config_(config) {
  if (!(config.lr > 0.0)) throw ValidationError("optimizer: lr must be > 0");
  if (config.weight_decay < 0.0) throw ValidationError("optimizer: weight_decay must be >= 0");
  if (config.warmup_steps < 0) throw ValidationError("optimizer: warmup_steps must be >= 0");
  for (const auto& p : store) {
    m_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

double AdamW::lr_at(long step) const {
  if (config_.warmup_steps > 0 && step < config_.warmup_steps) {
    return config_.lr * static_cast<double>(step + 1) / static_cast<double>(config_.warmup_steps);
  }
  return config_.lr;
}

double AdamW::step(ad::ParameterStore& store, const ad::GradientBuffer& grads) {
  const double lr = lr_at(step_);
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const auto id = static_cast<ad::ParamId>(i);
    auto& w = store[id].value;
    if (config_.weight_decay > 0.0 && w.rows() > 1) w *= 1.0 - lr * config_.weight_decay;
    if (!grads.touched(id)) {
      m_[i] *= config_.beta1;
      v_[i] *= config_.beta2;
    } else {
      const auto& g = grads[id];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    }
    w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
  return lr;
}

double clip_global_norm(ad::GradientBuffer& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace saco::optim
