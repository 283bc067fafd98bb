#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/kv_file.hpp"

namespace tsn {

struct VisualizeOptions {
  int iterations = 200;
  double step = 0.05;       // per-iteration move, in units of the mean |gradient|
  int blur_every = 10;
  double blur_sigma = 0.5;
  double noise_std = 0.05;  // initial Gaussian noise
  double bound = 0.5;       // inputs are clamped to [-bound, bound]
  std::uint64_t seed = 1;

  KeyValues to_kv() const;
};

struct VisualizeResult {
  Tensor image;                   // (C, S, S), the model's input shape
  std::vector<double> score_trace;  // target score before the first and after every iteration
};

/// Gradient ascent on the input from Gaussian noise: x += step * g / mean|g|,
/// clamped to the valid input range, with a Gaussian blur every blur_every
/// iterations.
VisualizeResult visualize_class(BackboneModel& model, int target_class, const VisualizeOptions& options = {});

/// Separable Gaussian blur per channel of a (C, H, W) tensor with
/// half-sample symmetric boundaries; preserves each channel's sum.
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Mean displacement (u, v) in pixels encoded by a normalized (2L, H, W)
/// flow input, averaged over all pixels and stacked fields.
std::pair<double, double> mean_flow(const Tensor& flow_input, double flow_bound);

/// Counter-clockwise angle in degrees of (u, v) with screen-up positive.
double flow_angle_deg(double u, double v);

}  // namespace tsn
