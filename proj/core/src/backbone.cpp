#include "tsn/backbone.hpp"

#include <cmath>
#include <sstream>

#include "tsn/error.hpp"

namespace tsn {

void BackboneSpec::validate() const {
  if (input_channels < 1) throw ConfigError("backbone: input_channels must be >= 1");
  if (input_size < 1) throw ConfigError("backbone: input_size must be >= 1");
  if (num_classes < 2) throw ConfigError("backbone: num_classes must be >= 2");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw ConfigError("backbone: dropout_prob must lie in [0, 1)");
  }
  for (const auto& st : stages) {
    if (st.out_channels < 1 || st.kernel < 1 || st.stride < 1) {
      throw ConfigError("backbone: stage channels, kernel and stride must be >= 1");
    }
  }
  (void)spatial_sizes();
}

std::vector<int> BackboneSpec::spatial_sizes() const {
  std::vector<int> sizes;
  int s = input_size;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    const int pad = st.kernel / 2;
    const int span = s + 2 * pad - st.kernel;
    if (span < 0) {
      throw ConfigError("backbone: stage " + std::to_string(i + 1) + " kernel exceeds spatial size " +
                        std::to_string(s));
    }
    s = span / st.stride + 1;
    if (st.pool) {
      if (s < 2) {
        throw ConfigError("backbone: pooling in stage " + std::to_string(i + 1) +
                          " collapses spatial size " + std::to_string(s) + " below 1");
      }
      s /= 2;
    }
    sizes.push_back(s);
  }
  return sizes;
}

std::size_t BackboneSpec::parameter_count() const {
  std::size_t count = 0;
  int in = input_channels;
  for (const auto& st : stages) {
    count += static_cast<std::size_t>(st.out_channels) * in * st.kernel * st.kernel;
    count += 2 * static_cast<std::size_t>(st.out_channels);
    in = st.out_channels;
  }
  count += static_cast<std::size_t>(num_classes) * in + num_classes;
  return count;
}

KeyValues BackboneSpec::to_kv() const {
  KeyValues kv;
  kv.set("input_channels", std::to_string(input_channels));
  kv.set("input_size", std::to_string(input_size));
  std::string st;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) st += ',';
    st += std::to_string(stages[i].out_channels) + ":" + std::to_string(stages[i].kernel) + ":" +
          std::to_string(stages[i].stride) + ":" + (stages[i].pool ? "1" : "0");
  }
  kv.set("stages", st);
  kv.set("dropout_prob", format_double(dropout_prob));
  kv.set("num_classes", std::to_string(num_classes));
  return kv;
}

BackboneSpec BackboneSpec::from_kv(const KeyValues& kv) {
  BackboneSpec spec;
  spec.input_channels = static_cast<int>(kv.get_int("input_channels"));
  spec.input_size = static_cast<int>(kv.get_int("input_size"));
  spec.dropout_prob = kv.get_double("dropout_prob");
  spec.num_classes = static_cast<int>(kv.get_int("num_classes"));
  spec.stages.clear();
  const std::string stages = kv.get_or("stages", "");
  if (!stages.empty()) {
    for (const auto& item : split(stages, ',')) {
      auto f = split(item, ':');
      if (f.size() != 4) throw FormatError("backbone stage \"" + item + "\" is not out:kernel:stride:pool");
      try {
        spec.stages.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), f[3] == "1"});
      } catch (const std::logic_error&) {
        throw FormatError("backbone stage \"" + item + "\" has a non-integer field");
      }
    }
  }
  spec.validate();
  return spec;
}

BackboneModel BackboneModel::build(const BackboneSpec& spec, Rng& rng) {
  spec.validate();
  BackboneModel m;
  m.spec_ = spec;
  int in = spec.input_channels;
  for (const auto& st : spec.stages) {
    ConvStage stage;
    const std::size_t o = static_cast<std::size_t>(st.out_channels);
    const std::size_t k = static_cast<std::size_t>(st.kernel);
    const double fan_in = static_cast<double>(in) * st.kernel * st.kernel;
    stage.weight = Tensor::randn({o, static_cast<std::size_t>(in), k, k}, rng, std::sqrt(2.0 / fan_in));
    stage.weight.set_requires_grad(true);
    stage.gamma = Tensor({o}, 1.0).set_requires_grad(true);
    stage.beta = Tensor({o}, 0.0).set_requires_grad(true);
    stage.running_mean = Tensor({o}, 0.0);
    stage.running_var = Tensor({o}, 1.0);
    stage.stride = st.stride;
    stage.pad = st.kernel / 2;
    stage.pool = st.pool;
    m.stages_.push_back(std::move(stage));
    in = st.out_channels;
  }
  const std::size_t c = static_cast<std::size_t>(spec.num_classes);
  m.head_weight_ =
      Tensor::randn({c, static_cast<std::size_t>(in)}, rng, std::sqrt(2.0 / static_cast<double>(in)));
  m.head_weight_.set_requires_grad(true);
  m.head_bias_ = Tensor({c}, 0.0).set_requires_grad(true);
  return m;
}

BackboneModel BackboneModel::clone() const {
  BackboneModel m;
  m.spec_ = spec_;
  for (const auto& st : stages_) {
    ConvStage copy = st;
    copy.weight = st.weight.clone();
    copy.gamma = st.gamma.clone();
    copy.beta = st.beta.clone();
    copy.running_mean = st.running_mean.clone();
    copy.running_var = st.running_var.clone();
    m.stages_.push_back(std::move(copy));
  }
  m.head_weight_ = head_weight_.clone();
  m.head_bias_ = head_bias_.clone();
  return m;
}

Tensor BackboneModel::forward(const Tensor& batch, Mode mode, Rng* rng) {
  const std::size_t in_c = static_cast<std::size_t>(spec_.input_channels);
  const std::size_t in_s = static_cast<std::size_t>(spec_.input_size);
  if (batch.rank() != 4 || batch.dim(1) != in_c || batch.dim(2) != in_s || batch.dim(3) != in_s) {
    throw DimensionError("backbone: expected input (N," + std::to_string(in_c) + "," +
                         std::to_string(in_s) + "," + std::to_string(in_s) + "), got " +
                         shape_str(batch.shape()));
  }
  Tensor x = batch;
  for (auto& st : stages_) {
    x = conv2d(x, st.weight, st.stride, st.pad);
    BnMode bn = BnMode::Eval;
    if (mode == Mode::Train) bn = st.bn_frozen ? BnMode::Frozen : BnMode::Train;
    x = batch_norm(x, st.gamma, st.beta, st.running_mean, st.running_var, bn);
    x = relu(x);
    if (st.pool) x = max_pool2d(x, 2, 2);
  }
  x = global_avg_pool(x);
  if (mode == Mode::Train && spec_.dropout_prob > 0.0) {
    if (rng == nullptr) throw ConfigError("backbone: train-mode dropout needs an rng");
    x = dropout(x, spec_.dropout_prob, mode, *rng);
  }
  return affine(x, head_weight_, head_bias_);
}

Tensor BackboneModel::first_conv_response(const Tensor& batch) const {
  if (stages_.empty()) throw ConfigError("backbone: model has no conv stage");
  NoGradGuard guard;
  return conv2d(batch, stages_.front().weight, stages_.front().stride, stages_.front().pad);
}

std::vector<NamedTensor> BackboneModel::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "stage" + std::to_string(i + 1);
    out.push_back({p + ".conv.weight", stages_[i].weight});
    out.push_back({p + ".bn.gamma", stages_[i].gamma});
    out.push_back({p + ".bn.beta", stages_[i].beta});
  }
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  return out;
}

std::vector<NamedTensor> BackboneModel::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "stage" + std::to_string(i + 1);
    out.push_back({p + ".bn.running_mean", stages_[i].running_mean});
    out.push_back({p + ".bn.running_var", stages_[i].running_var});
  }
  return out;
}

std::vector<NamedTensor> BackboneModel::state() const {
  auto out = parameters();
  for (auto& b : buffers()) out.push_back(std::move(b));
  return out;
}

void BackboneModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

void BackboneModel::set_partial_bn(bool enabled) {
  if (stages_.empty()) throw ConfigError("partial BN: model has no batch-norm layer");
  for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i].bn_frozen = enabled && i > 0;
}

std::vector<bool> BackboneModel::bn_freeze_flags() const {
  std::vector<bool> flags;
  for (const auto& st : stages_) flags.push_back(st.bn_frozen);
  return flags;
}

void BackboneModel::set_dropout(double drop_prob) {
  BackboneSpec next = spec_;
  next.dropout_prob = drop_prob;
  next.validate();
  spec_ = next;
}

BackboneModel cross_modality_init(const BackboneModel& source, int target_in_channels) {
  if (source.spec().input_channels != 3) {
    throw ConfigError("cross-modality init: source must take 3 RGB channels, got " +
                      std::to_string(source.spec().input_channels));
  }
  if (target_in_channels < 1) throw ConfigError("cross-modality init: target channels must be >= 1");
  BackboneModel target = source.clone();
  if (target.stages().empty()) throw ConfigError("cross-modality init: source has no conv stage");
  Tensor& w = target.stages().front().weight;
  const std::size_t o = w.dim(0), k = w.dim(2), plane = k * k;
  const std::size_t tc = static_cast<std::size_t>(target_in_channels);
  std::vector<double> values(o * tc * plane);
  auto src = w.data();
  for (std::size_t oc = 0; oc < o; ++oc) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double mean =
          (src[(oc * 3 + 0) * plane + p] + src[(oc * 3 + 1) * plane + p] + src[(oc * 3 + 2) * plane + p]) /
          3.0;
      for (std::size_t c = 0; c < tc; ++c) values[(oc * tc + c) * plane + p] = mean;
    }
  }
  w = Tensor({o, tc, k, k}, std::move(values)).set_requires_grad(true);
  target.spec_.input_channels = target_in_channels;
  return target;
}

}  // namespace tsn
