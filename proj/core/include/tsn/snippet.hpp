#pragma once

#include <string>

#include "tsn/dataset.hpp"
#include "tsn/modality.hpp"
#include "tsn/sampling.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

enum class Modality { Rgb, RgbDiff, Flow, WarpedFlow };

/// "rgb", "rgbdiff", "flow" or "warpedflow".
Modality parse_modality(const std::string& name);
std::string modality_name(Modality modality);
/// 1 for RGB, 5 for the stacked modalities.
int default_snippet_len(Modality modality);

struct ModalityConfig {
  Modality modality = Modality::Rgb;
  int snippet_len = 1;
  double flow_bound = kFlowBound;
  RansacOptions ransac;

  static ModalityConfig defaults(Modality modality, double flow_bound = kFlowBound);
  void validate() const;
};

/// 3 for RGB, 3L for RGB difference, 2L for (warped) flow.
int input_channels(const ModalityConfig& config);
StackKind stack_kind(Modality modality);
/// Number of sampling units in a video: frames for RGB, frame pairs otherwise.
int snippet_units(const VideoSource& video, Modality modality);

/// Normalized network input for unit t at native resolution:
///   rgb        frame/255 - 0.5                       (3, H, W)
///   rgbdiff    (frame(t+1) - frame(t))/255            (3, H, W)
///   flow       discretized flow bytes/255 - 0.5       (2, H, W)
///   warpedflow as flow, after camera compensation     (2, H, W)
Tensor modality_unit(const VideoSource& video, int t, const ModalityConfig& config);

/// Channel-concatenation of the units [start, start + L).
Tensor snippet_stack(const VideoSource& video, int start, const ModalityConfig& config);

/// Concatenates (c_i, H, W) tensors along channels.
Tensor concat_channels(std::span<const Tensor> parts);

/// RANSAC seed used for warped flow of (video, t); fixed so results do not
/// depend on sampling order.
std::uint64_t warp_seed(const std::string& video_id, int t);

}  // namespace tsn
