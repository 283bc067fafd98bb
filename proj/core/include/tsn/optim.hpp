#pragma once

#include <span>
#include <vector>

#include "tsn/backbone.hpp"

namespace tsn {

/// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
void sgd_momentum_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                       double lr, double momentum, double weight_decay = 0.0);

/// Momentum SGD over a fixed parameter list; velocities start at zero.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double momentum, double weight_decay = 0.0);
  /// Applies one update from the parameters' current gradients.
  void step(double lr);
  const std::vector<double>& velocity(std::size_t i) const { return velocity_.at(i); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

/// Piecewise-constant step schedule: base_lr * factor^(boundaries passed).
/// Boundaries are the explicit milestones, or every `step_every` steps when
/// no milestones are given.
struct LrSchedule {
  double base_lr = 0.01;
  int step_every = 0;
  std::vector<int> milestones;
  double factor = 0.1;

  void validate() const;
};

double lr_at(int step, const LrSchedule& schedule);

}  // namespace tsn
