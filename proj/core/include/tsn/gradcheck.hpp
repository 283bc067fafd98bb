#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/consensus.hpp"

namespace tsn {

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero up
/// to finite-difference noise from reading as large relative errors.
inline constexpr double kRelErrorFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kRelErrorFloor);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element
/// of x; x is restored afterwards.
std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor& x, double step = 1e-5);

struct GradcheckOptions {
  int segments = 3;
  ConsensusKind consensus;
  bool baseline = false;  // plain snippet cross-entropy instead of the TSN loss
  int videos = 2;
  int trials = 1;
  double step = 1e-5;
  double tie_gap = 1e-3;  // Max consensus: skip when the top two rows are closer
  bool identical_snippets = false;
  std::uint64_t seed = 1;
};

struct LayerError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradcheckReport {
  std::string consensus;
  int segments = 0;
  std::vector<LayerError> layers;
  double max_rel_error = 0.0;
  int trials_run = 0;
  int trials_skipped = 0;  // Max ties
  double seconds = 0.0;

  bool skipped() const { return trials_run == 0 && trials_skipped > 0; }
  bool passed(double tolerance) const { return trials_run > 0 && max_rel_error < tolerance; }
};

/// The tiny network used by the end-to-end check: 2 input channels at 8x8,
/// two conv stages and 3 classes.
BackboneSpec gradcheck_backbone_spec();

/// Compares analytic parameter gradients of the full video-level loss with
/// central finite differences. BN runs in eval mode with randomized running
/// statistics and dropout is off, so the loss is a smooth function of W.
GradcheckReport gradcheck(const GradcheckOptions& options);

}  // namespace tsn
