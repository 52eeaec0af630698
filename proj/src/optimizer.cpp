#include "cvl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cvl {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (lr_dual <= 0.0 || lr_single <= 0.0)
    throw std::invalid_argument("train config: learning rates must be positive");
  if (warmup_steps > total_steps)
    throw std::invalid_argument("train config: warmup_steps must be <= total_steps");
  if (total_steps == 0) throw std::invalid_argument("train config: total_steps must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  if (eps <= 0.0) throw std::invalid_argument("train config: eps must be positive");
  if (augment_prob < 0.0 || augment_prob > 1.0)
    throw std::invalid_argument("train config: augment_prob must lie in [0, 1]");
}

double lr_at(std::size_t step, double base_lr, const TrainConfig& cfg) {
  if (step > cfg.total_steps) return 0.0;
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const std::size_t decay_span = cfg.total_steps - cfg.warmup_steps;
  if (decay_span == 0) return 0.0;
  return base_lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(decay_span);
}

AdamOptimizer::AdamOptimizer(std::vector<NamedParam> params, const TrainConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  slots_.reserve(params.size());
  for (NamedParam& p : params) {
    Slot slot;
    slot.m.assign(p.tensor.size(), 0.0);
    slot.v.assign(p.tensor.size(), 0.0);
    slot.param = std::move(p);
    slots_.push_back(std::move(slot));
  }
}

void AdamOptimizer::zero_grad() {
  for (Slot& slot : slots_) slot.param.tensor.zero_grad();
}

void AdamOptimizer::step(double lr_dual_now, double lr_single_now) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  for (Slot& slot : slots_) {
    if (!slot.param.trainable) continue;
    const double lr = slot.param.group == ParamGroup::single_stream ? lr_single_now
                                                                    : lr_dual_now;
    Tensor& tensor = slot.param.tensor;
    if (!tensor.has_grad()) continue;  // disconnected this step: no update
    std::vector<double>& data = tensor.data();
    const std::vector<double>& grad = tensor.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient in parameter '" +
                                 slot.param.name + "'");
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = slot.m[i] / bias1;
      const double vhat = slot.v[i] / bias2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace cvl
