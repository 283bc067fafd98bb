#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsn/dataset.hpp"
#include "tsn/kv_file.hpp"
#include "tsn/modality.hpp"

namespace tsn {

enum class ActorShape { Rect, Disk };

/// Constant per-frame actor displacement held for one stage of a video.
struct MotionStage {
  double dx = 0.0;  // px per frame, +x is right
  double dy = 0.0;  // px per frame, +y is down
  ActorShape shape = ActorShape::Rect;

  /// "<dir>:<speed>[:rect|disk]" with dir in {right,left,up,down,still} or an
  /// angle in degrees (counter-clockwise, screen-up positive).
  static MotionStage parse(const std::string& text);
  std::string str() const;
  bool operator==(const MotionStage&) const = default;
};

struct ClassDef {
  std::string name;
  std::vector<MotionStage> stages;
};

/// Staged-motion video classes. Stages split each video's frame pairs into
/// equal parts; the label is the class whose stage sequence generated it.
struct SyntheticSpec {
  std::vector<ClassDef> classes;
  int frames = 24;
  int height = 256;
  int width = 340;
  int actor_size = 48;
  double camera_translation = 0.0;   // max |t| per frame pair, px
  double camera_scale = 0.0;         // max |s - 1| per frame pair
  double camera_rotation_deg = 0.0;  // max |angle| per frame pair
  double camera_perspective = 0.0;   // max |h31|, |h32|
  std::uint64_t texture_seed = 7;
  int train_per_class = 4;
  int test_per_class = 2;
  double flow_bound = kFlowBound;

  int num_classes() const { return static_cast<int>(classes.size()); }
  /// Index pairs of classes with equal stage multisets in different orders.
  std::vector<std::pair<int, int>> order_pairs() const;
  /// Throws ConfigError on invalid fields or when no order pair exists.
  void validate() const;

  static SyntheticSpec from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

/// Video rendered on demand from its motion parameters. Ground-truth flow is
/// exact: background pixels follow the per-pair camera homography, actor
/// pixels the actor's displacement.
class SyntheticVideo final : public VideoSource {
 public:
  SyntheticVideo(std::shared_ptr<const SyntheticSpec> spec, std::string id, int label, std::uint64_t seed);

  const std::string& id() const override { return id_; }
  int label() const override { return label_; }
  int num_frames() const override { return spec_->frames; }
  Tensor frame(int t) const override;
  FlowField flow(int t) const override;

  const Homography& camera(int pair) const { return camera_.at(static_cast<std::size_t>(pair)); }
  std::pair<double, double> actor_center(int t) const { return centers_.at(static_cast<std::size_t>(t)); }
  int stage_of_pair(int pair) const;
  bool in_actor(int t, double x, double y) const;

 private:
  std::shared_ptr<const SyntheticSpec> spec_;
  std::string id_;
  int label_;
  std::uint64_t texture_seed_;
  std::vector<Homography> camera_;         // frame t -> t + 1
  std::vector<Homography> world_to_frame_inv_;  // frame t -> world
  std::vector<std::pair<double, double>> centers_;
};

struct SyntheticSplit {
  Dataset train, test;
};

/// Deterministic in-memory dataset; videos render lazily.
SyntheticSplit make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes the dataset directory layout (frames as u8 tensors, flows as f32,
/// labels, splits, per-video camera homographies and meta.txt).
void generate_dataset(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& root);

}  // namespace tsn
