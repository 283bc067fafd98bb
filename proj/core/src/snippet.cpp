#include "tsn/snippet.hpp"

#include <algorithm>

#include "tsn/error.hpp"

namespace tsn {

Modality parse_modality(const std::string& name) {
  if (name == "rgb") return Modality::Rgb;
  if (name == "rgbdiff") return Modality::RgbDiff;
  if (name == "flow") return Modality::Flow;
  if (name == "warpedflow") return Modality::WarpedFlow;
  throw ConfigError("unknown modality \"" + name + "\" (expected rgb, rgbdiff, flow or warpedflow)");
}

std::string modality_name(Modality modality) {
  switch (modality) {
    case Modality::Rgb: return "rgb";
    case Modality::RgbDiff: return "rgbdiff";
    case Modality::Flow: return "flow";
    case Modality::WarpedFlow: return "warpedflow";
  }
  return "rgb";
}

int default_snippet_len(Modality modality) { return modality == Modality::Rgb ? 1 : 5; }

ModalityConfig ModalityConfig::defaults(Modality modality, double flow_bound) {
  ModalityConfig c;
  c.modality = modality;
  c.snippet_len = default_snippet_len(modality);
  c.flow_bound = flow_bound;
  return c;
}

void ModalityConfig::validate() const {
  if (snippet_len < 1) throw ConfigError("snippet length must be >= 1");
  if (modality == Modality::Rgb && snippet_len != 1) throw ConfigError("rgb snippets hold exactly one frame");
  if (!(flow_bound > 0)) throw ConfigError("flow bound must be > 0");
}

int input_channels(const ModalityConfig& config) {
  switch (config.modality) {
    case Modality::Rgb: return 3;
    case Modality::RgbDiff: return 3 * config.snippet_len;
    case Modality::Flow:
    case Modality::WarpedFlow: return 2 * config.snippet_len;
  }
  return 3;
}

StackKind stack_kind(Modality modality) {
  return modality == Modality::Flow || modality == Modality::WarpedFlow ? StackKind::Flow : StackKind::Appearance;
}

int snippet_units(const VideoSource& video, Modality modality) {
  return modality == Modality::Rgb ? video.num_frames() : video.num_frames() - 1;
}

std::uint64_t warp_seed(const std::string& video_id, int t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : video_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h ^ (static_cast<std::uint64_t>(t) * 0x9e3779b97f4a7c15ULL);
}

Tensor modality_unit(const VideoSource& video, int t, const ModalityConfig& config) {
  const int units = snippet_units(video, config.modality);
  if (t < 0 || t >= units) {
    throw ConfigError("unit " + std::to_string(t) + " outside [0, " + std::to_string(units) + ") of video " +
                      video.id());
  }
  switch (config.modality) {
    case Modality::Rgb: {
      Tensor f = video.frame(t).detach();
      for (double& x : f.mutable_data()) x = x / 255.0 - 0.5;
      return f;
    }
    case Modality::RgbDiff: {
      const Tensor frames[2] = {video.frame(t), video.frame(t + 1)};
      Tensor d = rgb_diff_stack(frames).detach();
      for (double& x : d.mutable_data()) x /= 255.0;
      return d;
    }
    case Modality::Flow:
    case Modality::WarpedFlow: {
      const FlowField f[1] = {video.flow(t)};
      Tensor s;
      if (config.modality == Modality::WarpedFlow) {
        Rng rng(warp_seed(video.id(), t));
        const Homography h[1] = {estimate_homography(f[0], rng, config.ransac).h};
        s = flow_stack(f, h, config.flow_bound);
      } else {
        s = flow_stack(f, {}, config.flow_bound);
      }
      s = s.detach();
      for (double& x : s.mutable_data()) x = x / 255.0 - 0.5;
      return s;
    }
  }
  throw ConfigError("unsupported modality");
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.rank() != 3 || p.dim(1) != h || p.dim(2) != w) {
      throw DimensionError("concat_channels: " + shape_str(p.shape()) + " does not match " +
                           shape_str(parts[0].shape()));
    }
    channels += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(channels * h * w);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor({channels, h, w}, std::move(out));
}

Tensor snippet_stack(const VideoSource& video, int start, const ModalityConfig& config) {
  config.validate();
  const int units = snippet_units(video, config.modality);
  if (start < 0 || start + config.snippet_len > units) {
    throw ConfigError("snippet [" + std::to_string(start) + ", " + std::to_string(start + config.snippet_len) +
                      ") exceeds the " + std::to_string(units) + " units of video " + video.id());
  }
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(config.snippet_len));
  for (int l = 0; l < config.snippet_len; ++l) parts.push_back(modality_unit(video, start + l, config));
  return concat_channels(parts);
}

}  // namespace tsn
