#include "tsn/optim.hpp"

#include <algorithm>

#include "tsn/error.hpp"

namespace tsn {

void sgd_momentum_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                       double lr, double momentum, double weight_decay) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw DimensionError("sgd step: param has " + std::to_string(param.size()) + " values, grad " +
                         std::to_string(grad.size()) + ", velocity " + std::to_string(velocity.size()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight decay must be >= 0");
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdMomentum::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) {
      const std::vector<double> zeros(p.numel(), 0.0);
      sgd_momentum_step(p.mutable_data(), zeros, velocity_[i], lr, momentum_, weight_decay_);
    } else {
      sgd_momentum_step(p.mutable_data(), p.grad(), velocity_[i], lr, momentum_, weight_decay_);
    }
  }
}

void LrSchedule::validate() const {
  if (!(base_lr > 0)) throw ConfigError("learning rate must be > 0");
  if (step_every < 0) throw ConfigError("lr step interval must be >= 0");
  if (!(factor > 0)) throw ConfigError("lr decay factor must be > 0");
  if (!std::is_sorted(milestones.begin(), milestones.end())) throw ConfigError("lr milestones must be ascending");
}

double lr_at(int step, const LrSchedule& schedule) {
  if (step < 0) throw ConfigError("step must be >= 0");
  int passed = 0;
  if (!schedule.milestones.empty()) {
    passed = static_cast<int>(std::upper_bound(schedule.milestones.begin(), schedule.milestones.end(), step) -
                              schedule.milestones.begin());
  } else if (schedule.step_every > 0) {
    passed = step / schedule.step_every;
  }
  double lr = schedule.base_lr;
  for (int i = 0; i < passed; ++i) lr *= schedule.factor;
  return lr;
}

}  // namespace tsn
