#include <filesystem>

#include "tsn/backbone.hpp"
#include "tsn/error.hpp"
#include "tsn/tensor_io.hpp"

namespace tsn {

namespace {

std::string dims_text(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const BackboneModel& model,
                     const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  model.spec().to_kv().save(dir / "spec.txt");

  KeyValues manifest;
  manifest.set("format", "1");
  manifest.set("modality", info.modality);
  manifest.set("snippet_len", std::to_string(info.snippet_len));
  manifest.set("flow_bound", format_double(info.flow_bound));
  manifest.set("crop_output", std::to_string(info.crop_output));
  std::string flags;
  for (bool f : model.bn_freeze_flags()) flags += std::string(flags.empty() ? "" : ",") + (f ? "1" : "0");
  manifest.set("bn_frozen", flags);
  for (const auto& [k, v] : info.extra.entries()) manifest.set("extra." + k, v);
  for (const auto& p : model.parameters()) {
    manifest.set("tensor." + p.name, "parameter " + dims_text(p.tensor.shape()));
    write_tensor(dir / (p.name + ".tsnt"), p.tensor);
  }
  for (const auto& b : model.buffers()) {
    manifest.set("tensor." + b.name, "buffer " + dims_text(b.tensor.shape()));
    write_tensor(dir / (b.name + ".tsnt"), b.tensor);
  }
  manifest.save(dir / "manifest.txt");
}

BackboneModel load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  if (!std::filesystem::is_directory(dir)) throw Error("checkpoint directory not found: " + dir.string());
  const BackboneSpec spec = BackboneSpec::from_kv(KeyValues::load(dir / "spec.txt"));
  const KeyValues manifest = KeyValues::load(dir / "manifest.txt");
  Rng rng(0);
  BackboneModel model = BackboneModel::build(spec, rng);
  for (auto& entry : model.state()) {
    const std::string key = "tensor." + entry.name;
    if (!manifest.contains(key)) throw FormatError("manifest lacks " + entry.name);
    Tensor loaded = read_tensor(dir / (entry.name + ".tsnt"));
    if (loaded.shape() != entry.tensor.shape()) {
      throw DimensionError("checkpoint tensor " + entry.name + " has shape " + shape_str(loaded.shape()) +
                           ", model expects " + shape_str(entry.tensor.shape()));
    }
    auto dst = entry.tensor.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
  }
  const auto flags = manifest.get_or("bn_frozen", "");
  if (!flags.empty()) {
    const auto parts = split(flags, ',');
    if (parts.size() != model.stages().size()) throw FormatError("bn_frozen length mismatch");
    for (std::size_t i = 0; i < parts.size(); ++i) model.stages()[i].bn_frozen = parts[i] == "1";
  }
  if (info != nullptr) {
    info->modality = manifest.get_or("modality", "rgb");
    info->snippet_len = static_cast<int>(manifest.get_int_or("snippet_len", 1));
    info->flow_bound = manifest.get_double_or("flow_bound", 20.0);
    info->crop_output = static_cast<int>(manifest.get_int_or("crop_output", 0));
    info->extra = KeyValues();
    for (const auto& [k, v] : manifest.entries()) {
      if (k.rfind("extra.", 0) == 0) info->extra.set(k.substr(6), v);
    }
  }
  return model;
}

}  // namespace tsn
