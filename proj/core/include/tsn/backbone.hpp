#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsn/kv_file.hpp"
#include "tsn/ops.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

struct StageSpec {
  int out_channels = 16;
  int kernel = 3;
  int stride = 1;
  bool pool = true;  // 2x2 max pool after conv-BN-ReLU
};

/// Shape of the desk-scale classifier that plays the role of the per-snippet
/// ConvNet. An empty stage list gives a linear model (global pool + head).
struct BackboneSpec {
  int input_channels = 3;
  int input_size = 64;
  std::vector<StageSpec> stages = {{16, 3, 1, true}, {32, 3, 1, true}, {64, 3, 1, false}};
  double dropout_prob = 0.5;
  int num_classes = 5;

  /// Throws ConfigError if the stages collapse the spatial size below 1 or
  /// any field is out of range.
  void validate() const;
  /// Spatial extent after every stage, in order.
  std::vector<int> spatial_sizes() const;
  std::size_t parameter_count() const;

  KeyValues to_kv() const;
  static BackboneSpec from_kv(const KeyValues& kv);
};

struct ConvStage {
  Tensor weight;  // (O, I, K, K)
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  bool bn_frozen = false;
  int stride = 1;
  int pad = 1;
  bool pool = true;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class BackboneModel;
BackboneModel cross_modality_init(const BackboneModel& source, int target_in_channels);

/// Parameter set W: conv/BN stages, dropout and an affine head of width C.
/// Move-only; clone() gives an independent copy.
class BackboneModel {
 public:
  static BackboneModel build(const BackboneSpec& spec, Rng& rng);

  BackboneModel(BackboneModel&&) = default;
  BackboneModel& operator=(BackboneModel&&) = default;
  BackboneModel(const BackboneModel&) = delete;
  BackboneModel& operator=(const BackboneModel&) = delete;

  BackboneModel clone() const;

  /// Raw class scores of shape (N, C). Train mode needs an rng when dropout is
  /// active; BN layers follow the mode and their freeze flags.
  Tensor forward(const Tensor& batch, Mode mode, Rng* rng = nullptr);
  /// Pre-activation response of the first conv (no BN), used to probe the
  /// first-layer weights.
  Tensor first_conv_response(const Tensor& batch) const;

  const BackboneSpec& spec() const { return spec_; }
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;
  std::vector<NamedTensor> state() const;  // parameters then buffers
  void zero_grad();

  std::size_t num_bn_layers() const { return stages_.size(); }
  void set_partial_bn(bool enabled);
  std::vector<bool> bn_freeze_flags() const;
  void set_dropout(double drop_prob);

  std::vector<ConvStage>& stages() { return stages_; }
  const std::vector<ConvStage>& stages() const { return stages_; }
  Tensor& head_weight() { return head_weight_; }
  Tensor& head_bias() { return head_bias_; }

 private:
  friend BackboneModel cross_modality_init(const BackboneModel& source, int target_in_channels);
  BackboneModel() = default;

  BackboneSpec spec_;
  std::vector<ConvStage> stages_;
  Tensor head_weight_, head_bias_;
};

/// Builds a model for `target_in_channels` inputs from an RGB-trained source:
/// the first conv's weights are averaged over the three RGB channels and the
/// average is replicated across every target channel. Everything else,
/// including BN running statistics, is copied.
BackboneModel cross_modality_init(const BackboneModel& source, int target_in_channels);

/// Extra facts stored next to the weights so a checkpoint is self-describing.
struct CheckpointInfo {
  std::string modality = "rgb";
  int snippet_len = 1;
  double flow_bound = 20.0;
  int crop_output = 0;  // network-input side used by augmentation/ten-crop
  KeyValues extra;
};

/// Directory of "<name>.tsnt" files plus manifest.txt (names, kinds, shapes,
/// freeze flags) and spec.txt (backbone key=value).
void save_checkpoint(const std::filesystem::path& dir, const BackboneModel& model,
                     const CheckpointInfo& info);
BackboneModel load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace tsn
