#pragma once

#include <array>
#include <utility>
#include <vector>

#include "tsn/tensor.hpp"

namespace tsn {

/// K equal-duration segments over [0, num_frames) and, once sampled, one
/// snippet start per segment.
struct SegmentPlan {
  int num_frames = 0;
  int num_segments = 0;
  std::vector<std::pair<int, int>> ranges;  // half-open [begin, end)
  std::vector<int> starts;
};

inline constexpr int kDefaultSegments = 3;
inline constexpr int kTestSnippets = 25;

/// Ranges [floor(k*T/K), floor((k+1)*T/K)). Throws ConfigError when T < K or K < 1.
SegmentPlan partition_segments(int num_frames, int num_segments = kDefaultSegments);

/// Valid snippet starts inside segment k: [begin, min(end - 1, T - L)].
std::pair<int, int> valid_start_range(const SegmentPlan& plan, int segment, int snippet_len);

/// One start per segment, uniform over that segment's valid starts.
std::vector<int> sample_train(const SegmentPlan& plan, int snippet_len, Rng& rng);

/// Deterministic, evenly spread starts: floor((i + 0.5) * (T - L + 1) / count).
std::vector<int> sample_test(int num_frames, int snippet_len, int count = kTestSnippets);

inline constexpr int kSourceHeight = 256;
inline constexpr int kSourceWidth = 340;
inline constexpr int kCropOutput = 224;
inline constexpr std::array<int, 4> kCropSides = {256, 224, 192, 168};

enum class CropPosition { TopLeft, TopRight, BottomLeft, BottomRight, Center };
inline constexpr std::array<CropPosition, 5> kCropPositions = {
    CropPosition::TopLeft, CropPosition::TopRight, CropPosition::BottomLeft,
    CropPosition::BottomRight, CropPosition::Center};

/// Flow stacks interleave (u, v) channels; flipping negates every u channel.
/// Values are assumed centered so that negation is exact (x/255 - 0.5 maps the
/// byte inversion 255 - b onto -x).
enum class StackKind { Appearance, Flow };

struct CropSpec {
  int crop_h = kCropOutput;
  int crop_w = kCropOutput;
  CropPosition position = CropPosition::Center;
  bool flip = false;
};

/// Top-left (row, col) of a crop window touching the named corner, or the
/// centered window (floor division).
std::pair<int, int> crop_offset(int src_h, int src_w, int crop_h, int crop_w, CropPosition position);

/// Crop side drawn independently for height and width from kCropSides,
/// position uniform over the five windows, flip with probability 0.5.
CropSpec draw_crop(Rng& rng);

/// Bilinear resize (pixel-center aligned) of a C x H x W tensor.
Tensor resize_bilinear(const Tensor& stack, int out_h, int out_w);
Tensor hflip(const Tensor& stack, StackKind kind);
Tensor apply_crop(const Tensor& stack, const CropSpec& crop, StackKind kind, int out_side = kCropOutput);

/// Corner cropping with scale jittering on a C x 256 x 340 stack.
Tensor augment_train(const Tensor& stack, Rng& rng, StackKind kind, int out_side = kCropOutput,
                     CropSpec* chosen = nullptr);

/// Four corners, center, then their five mirrored counterparts, all 224-sided
/// windows resized to out_side.
std::vector<Tensor> tencrop(const Tensor& stack, StackKind kind, int out_side = kCropOutput);

}  // namespace tsn
