#include "tsn/dataset.hpp"

#include <cstdio>

#include "tsn/error.hpp"
#include "tsn/kv_file.hpp"
#include "tsn/split.hpp"
#include "tsn/tensor_io.hpp"

namespace tsn {

std::string frame_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.tsnt", t);
  return buf;
}

std::string flow_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "flow_%05d.tsnt", t);
  return buf;
}

DiskVideo::DiskVideo(std::filesystem::path root, std::string id, int label, int num_frames)
    : root_(std::move(root)), id_(std::move(id)), label_(label), num_frames_(num_frames) {}

Tensor DiskVideo::frame(int t) const {
  if (t < 0 || t >= num_frames_) throw ConfigError("frame index " + std::to_string(t) + " out of range");
  Tensor f = read_tensor(root_ / "videos" / id_ / frame_filename(t));
  if (f.rank() != 3 || f.dim(0) != 3) throw DimensionError("frame must be (3, H, W), got " + shape_str(f.shape()));
  return f;
}

FlowField DiskVideo::flow(int t) const {
  if (t < 0 || t + 1 >= num_frames_) throw ConfigError("flow index " + std::to_string(t) + " out of range");
  return FlowField::unpack(read_tensor(root_ / "flow" / id_ / flow_filename(t)));
}

Dataset load_dataset(const std::filesystem::path& root, const std::string& split) {
  const KeyValues meta = KeyValues::load(root / "meta.txt");
  Dataset ds;
  ds.num_classes = static_cast<int>(meta.get_int("num_classes"));
  ds.flow_bound = meta.get_double_or("flow_bound", kFlowBound);
  const int frames = static_cast<int>(meta.get_int("frames"));
  const SplitList entries = load_split(root / "splits" / (split + ".txt"));
  for (const auto& e : entries) {
    if (e.label >= ds.num_classes) {
      throw ConfigError("split entry " + e.path + " has label outside [0, " + std::to_string(ds.num_classes) + ")");
    }
    const std::string id = std::filesystem::path(e.path).filename().string();
    ds.videos.push_back(std::make_shared<DiskVideo>(root, id, e.label, frames));
  }
  return ds;
}

}  // namespace tsn
