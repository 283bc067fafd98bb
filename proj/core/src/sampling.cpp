#include "tsn/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "tsn/error.hpp"

namespace tsn {

SegmentPlan partition_segments(int num_frames, int num_segments) {
  if (num_segments < 1) throw ConfigError("segments: K must be >= 1");
  if (num_frames < num_segments) {
    throw ConfigError("segments: video of " + std::to_string(num_frames) + " frames cannot hold " +
                      std::to_string(num_segments) + " segments");
  }
  SegmentPlan plan;
  plan.num_frames = num_frames;
  plan.num_segments = num_segments;
  const long t = num_frames, k = num_segments;
  for (long i = 0; i < k; ++i) {
    plan.ranges.emplace_back(static_cast<int>(i * t / k), static_cast<int>((i + 1) * t / k));
  }
  return plan;
}

std::pair<int, int> valid_start_range(const SegmentPlan& plan, int segment, int snippet_len) {
  if (snippet_len < 1) throw ConfigError("snippet length must be >= 1");
  const auto [begin, end] = plan.ranges.at(static_cast<std::size_t>(segment));
  const int last = std::min(end - 1, plan.num_frames - snippet_len);
  if (last < begin) {
    throw ConfigError("segment " + std::to_string(segment) + " [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") has no valid start for snippet length " +
                      std::to_string(snippet_len));
  }
  return {begin, last};
}

std::vector<int> sample_train(const SegmentPlan& plan, int snippet_len, Rng& rng) {
  std::vector<int> starts;
  starts.reserve(plan.ranges.size());
  for (int k = 0; k < plan.num_segments; ++k) {
    const auto [lo, hi] = valid_start_range(plan, k, snippet_len);
    starts.push_back(std::uniform_int_distribution<int>(lo, hi)(rng));
  }
  return starts;
}

std::vector<int> sample_test(int num_frames, int snippet_len, int count) {
  if (snippet_len < 1 || count < 1) throw ConfigError("test sampling: length and count must be >= 1");
  if (num_frames < snippet_len) {
    throw ConfigError("test sampling: video of " + std::to_string(num_frames) +
                      " frames is shorter than snippet length " + std::to_string(snippet_len));
  }
  const long room = num_frames - snippet_len + 1;
  std::vector<int> starts(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    starts[static_cast<std::size_t>(i)] = static_cast<int>((2 * i + 1) * room / (2L * count));
  }
  return starts;
}

std::pair<int, int> crop_offset(int src_h, int src_w, int crop_h, int crop_w, CropPosition position) {
  if (crop_h > src_h || crop_w > src_w || crop_h < 1 || crop_w < 1) {
    throw DimensionError("crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                         " does not fit source " + std::to_string(src_h) + "x" + std::to_string(src_w));
  }
  const int dy = src_h - crop_h, dx = src_w - crop_w;
  switch (position) {
    case CropPosition::TopLeft: return {0, 0};
    case CropPosition::TopRight: return {0, dx};
    case CropPosition::BottomLeft: return {dy, 0};
    case CropPosition::BottomRight: return {dy, dx};
    case CropPosition::Center: return {dy / 2, dx / 2};
  }
  return {0, 0};
}

CropSpec draw_crop(Rng& rng) {
  std::uniform_int_distribution<int> side(0, static_cast<int>(kCropSides.size()) - 1);
  std::uniform_int_distribution<int> pos(0, static_cast<int>(kCropPositions.size()) - 1);
  CropSpec crop;
  crop.crop_h = kCropSides[static_cast<std::size_t>(side(rng))];
  crop.crop_w = kCropSides[static_cast<std::size_t>(side(rng))];
  crop.position = kCropPositions[static_cast<std::size_t>(pos(rng))];
  crop.flip = std::bernoulli_distribution(0.5)(rng);
  return crop;
}

namespace {

void require_stack(const Tensor& stack, const char* op) {
  if (stack.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected C x H x W, got " + shape_str(stack.shape()));
  }
}

void require_source(const Tensor& stack, const char* op) {
  require_stack(stack, op);
  if (stack.dim(1) != kSourceHeight || stack.dim(2) != kSourceWidth) {
    throw DimensionError(std::string(op) + ": source must be 256x340, got " + shape_str(stack.shape()));
  }
}

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> taps(int src_len, int dst_len, int offset) {
  std::vector<Tap> out(static_cast<std::size_t>(dst_len));
  const double scale = static_cast<double>(src_len) / dst_len;
  for (int d = 0; d < dst_len; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src_len - 1);
    out[static_cast<std::size_t>(d)] = {static_cast<std::size_t>(i0 + offset),
                                        static_cast<std::size_t>(i1 + offset), s - i0};
  }
  return out;
}

// Bilinear resample of the window [y0, y0+h) x [x0, x0+w) into out_h x out_w.
Tensor crop_resize(const Tensor& stack, int y0, int x0, int h, int w, int out_h, int out_w) {
  const std::size_t c = stack.dim(0), sw = stack.dim(2), sh = stack.dim(1);
  const auto ty = taps(h, out_h, y0);
  const auto tx = taps(w, out_w, x0);
  std::vector<double> out(c * static_cast<std::size_t>(out_h * out_w));
  auto src = stack.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = src.data() + ch * sh * sw;
    double* dst = out.data() + ch * static_cast<std::size_t>(out_h * out_w);
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      const double* r0 = plane + a.i0 * sw;
      const double* r1 = plane + a.i1 * sw;
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double top = b.w1 == 0.0 ? r0[b.i0] : r0[b.i0] + b.w1 * (r0[b.i1] - r0[b.i0]);
        const double bot = b.w1 == 0.0 ? r1[b.i0] : r1[b.i0] + b.w1 * (r1[b.i1] - r1[b.i0]);
        dst[y * out_w + x] = a.w1 == 0.0 ? top : top + a.w1 * (bot - top);
      }
    }
  }
  return Tensor({c, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)}, std::move(out));
}

}  // namespace

Tensor resize_bilinear(const Tensor& stack, int out_h, int out_w) {
  require_stack(stack, "resize");
  if (out_h < 1 || out_w < 1) throw ConfigError("resize: output extent must be >= 1");
  return crop_resize(stack, 0, 0, static_cast<int>(stack.dim(1)), static_cast<int>(stack.dim(2)), out_h,
                     out_w);
}

Tensor hflip(const Tensor& stack, StackKind kind) {
  require_stack(stack, "hflip");
  const std::size_t c = stack.dim(0), h = stack.dim(1), w = stack.dim(2);
  std::vector<double> out(stack.numel());
  auto src = stack.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const bool negate = kind == StackKind::Flow && ch % 2 == 0;
    for (std::size_t y = 0; y < h; ++y) {
      const double* row = src.data() + (ch * h + y) * w;
      double* dst = out.data() + (ch * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) dst[x] = negate ? -row[w - 1 - x] : row[w - 1 - x];
    }
  }
  return Tensor(stack.shape(), std::move(out));
}

Tensor apply_crop(const Tensor& stack, const CropSpec& crop, StackKind kind, int out_side) {
  require_stack(stack, "crop");
  const auto [y0, x0] = crop_offset(static_cast<int>(stack.dim(1)), static_cast<int>(stack.dim(2)),
                                    crop.crop_h, crop.crop_w, crop.position);
  Tensor out = crop_resize(stack, y0, x0, crop.crop_h, crop.crop_w, out_side, out_side);
  return crop.flip ? hflip(out, kind) : out;
}

Tensor augment_train(const Tensor& stack, Rng& rng, StackKind kind, int out_side, CropSpec* chosen) {
  require_source(stack, "augment");
  const CropSpec crop = draw_crop(rng);
  if (chosen != nullptr) *chosen = crop;
  return apply_crop(stack, crop, kind, out_side);
}

std::vector<Tensor> tencrop(const Tensor& stack, StackKind kind, int out_side) {
  require_source(stack, "ten-crop");
  std::vector<Tensor> views;
  views.reserve(10);
  for (CropPosition pos : kCropPositions) {
    views.push_back(apply_crop(stack, CropSpec{kCropOutput, kCropOutput, pos, false}, kind, out_side));
  }
  for (std::size_t i = 0; i < 5; ++i) views.push_back(hflip(views[i], kind));
  return views;
}

}  // namespace tsn
