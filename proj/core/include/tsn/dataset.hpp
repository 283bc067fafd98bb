#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tsn/modality.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

/// One labelled video: RGB frames (3 x H x W, values 0..255) and the forward
/// flow between consecutive frames.
class VideoSource {
 public:
  virtual ~VideoSource() = default;
  virtual const std::string& id() const = 0;
  virtual int label() const = 0;
  virtual int num_frames() const = 0;
  virtual Tensor frame(int t) const = 0;
  /// Flow from frame t to t + 1, t in [0, num_frames - 1).
  virtual FlowField flow(int t) const = 0;
};

struct Dataset {
  std::vector<std::shared_ptr<const VideoSource>> videos;
  int num_classes = 0;
  double flow_bound = kFlowBound;

  bool empty() const { return videos.empty(); }
  std::size_t size() const { return videos.size(); }
};

/// Opens one split ("train" or "test") of a dataset directory:
/// videos/<id>/frame_%05d.tsnt, flow/<id>/flow_%05d.tsnt, splits/<split>.txt,
/// meta.txt.
Dataset load_dataset(const std::filesystem::path& root, const std::string& split);

/// Disk-backed video; frames and flows are read on demand.
class DiskVideo final : public VideoSource {
 public:
  DiskVideo(std::filesystem::path root, std::string id, int label, int num_frames);
  const std::string& id() const override { return id_; }
  int label() const override { return label_; }
  int num_frames() const override { return num_frames_; }
  Tensor frame(int t) const override;
  FlowField flow(int t) const override;

 private:
  std::filesystem::path root_;
  std::string id_;
  int label_;
  int num_frames_;
};

std::string frame_filename(int t);
std::string flow_filename(int t);

}  // namespace tsn
