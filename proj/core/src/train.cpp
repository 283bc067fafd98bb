#include "tsn/train.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "tsn/error.hpp"
#include "tsn/parallel.hpp"
#include "tsn/sampling.hpp"

namespace tsn {

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") {
    c.batch_size = 16;
    c.segments = 3;
    c.schedule = {0.01, 0, {}, 0.1};
    c.max_iters = 200;
  } else if (name == "full-spatial") {
    c.modality = ModalityConfig::defaults(Modality::Rgb);
    c.batch_size = 256;
    c.schedule = {0.001, 2000, {}, 0.1};
    c.max_iters = 4500;
    c.dropout = 0.8;
  } else if (name == "full-temporal") {
    c.modality = ModalityConfig::defaults(Modality::Flow);
    c.batch_size = 256;
    c.schedule = {0.005, 0, {12000, 18000}, 0.1};
    c.max_iters = 20000;
    c.dropout = 0.7;
  } else {
    throw ConfigError("unknown preset \"" + name + "\" (expected desk, full-spatial or full-temporal)");
  }
  return c;
}

void TrainConfig::validate() const {
  modality.validate();
  schedule.validate();
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight decay must be >= 0");
  if (max_iters < 0) throw ConfigError("max iterations must be >= 0");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout probability must lie in [0, 1)");
  if (log_every < 1) throw ConfigError("log interval must be >= 1");
  if (baseline && segments != 1) throw ConfigError("the snippet-level baseline uses one snippet per video (K=1)");
  if (consensus.type == ConsensusType::WeightedAverage && consensus.weights.size() != static_cast<std::size_t>(segments)) {
    throw ConfigError("weighted consensus needs " + std::to_string(segments) + " weights");
  }
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("modality", modality_name(modality.modality));
  kv.set("snippet_len", std::to_string(modality.snippet_len));
  kv.set("flow_bound", format_double(modality.flow_bound));
  kv.set("segments", std::to_string(segments));
  kv.set("consensus", baseline ? "none" : consensus.name());
  if (consensus.type == ConsensusType::WeightedAverage) {
    std::string w;
    for (double x : consensus.weights) w += (w.empty() ? "" : ",") + format_double(x);
    kv.set("consensus_weights", w);
  }
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("momentum", format_double(momentum));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("lr", format_double(schedule.base_lr));
  kv.set("lr_step_every", std::to_string(schedule.step_every));
  std::string ms;
  for (int m : schedule.milestones) ms += (ms.empty() ? "" : ",") + std::to_string(m);
  kv.set("lr_milestones", ms);
  kv.set("lr_factor", format_double(schedule.factor));
  kv.set("max_iters", std::to_string(max_iters));
  kv.set("dropout", format_double(dropout));
  kv.set("partial_bn", partial_bn ? "1" : "0");
  kv.set("init_from", init_from);
  kv.set("seed", std::to_string(seed));
  return kv;
}

BackboneModel initial_model(const TrainConfig& config, const Dataset& dataset, Rng& rng) {
  const int channels = input_channels(config.modality);
  BackboneModel model = [&] {
    if (config.init_from.empty()) {
      BackboneSpec spec = config.backbone;
      spec.input_channels = channels;
      spec.num_classes = dataset.num_classes;
      spec.dropout_prob = config.dropout;
      spec.validate();
      return BackboneModel::build(spec, rng);
    }
    BackboneModel loaded = load_checkpoint(config.init_from);
    if (loaded.spec().input_channels == channels) return loaded;
    if (loaded.spec().input_channels == 3) return cross_modality_init(loaded, channels);
    throw ConfigError("init-from checkpoint takes " + std::to_string(loaded.spec().input_channels) +
                      " channels; cannot adapt to " + std::to_string(channels));
  }();
  if (model.spec().num_classes != dataset.num_classes) {
    throw ConfigError("model has " + std::to_string(model.spec().num_classes) + " classes, dataset " +
                      std::to_string(dataset.num_classes));
  }
  model.set_dropout(config.dropout);
  if (model.num_bn_layers() > 0) model.set_partial_bn(config.partial_bn);
  return model;
}

namespace {

struct SnippetJob {
  std::size_t video;
  int start;
  std::uint64_t aug_seed;
};

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset) {
  config.validate();
  if (dataset.empty()) throw ConfigError("training set is empty");
  if (dataset.num_classes < 2) throw ConfigError("training set needs at least 2 classes");
  const int per_video = config.baseline ? 1 : config.segments;
  const int len = config.modality.snippet_len;
  for (const auto& v : dataset.videos) {
    const int units = snippet_units(*v, config.modality.modality);
    if (units < std::max(per_video, len)) {
      throw ConfigError("video " + v->id() + " has " + std::to_string(units) + " units; need K=" +
                        std::to_string(per_video) + " and L=" + std::to_string(len));
    }
    if (v->label() < 0 || v->label() >= dataset.num_classes) throw ConfigError("video " + v->id() + " has a bad label");
  }

  Rng rng(config.seed);
  TrainResult result{initial_model(config, dataset, rng), {}, {}, {}};
  BackboneModel& model = result.model;
  if (config.batch_size * per_video < 2 && model.num_bn_layers() > 0) {
    throw ConfigError("batch-norm training needs at least 2 snippets per batch");
  }
  const int side = model.spec().input_size;
  const StackKind kind = stack_kind(config.modality.modality);

  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  SgdMomentum opt(params, config.momentum, config.weight_decay);

  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  double interval_loss = 0.0;
  int interval_correct = 0, interval_videos = 0, interval_steps = 0;

  for (int step = 0; step < config.max_iters; ++step) {
    std::vector<SnippetJob> jobs;
    std::vector<int> labels;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t vid = order[cursor++];
      const VideoSource& video = *dataset.videos[vid];
      const int units = snippet_units(video, config.modality.modality);
      labels.push_back(video.label());
      std::vector<int> starts;
      if (config.baseline) {
        starts.push_back(std::uniform_int_distribution<int>(0, units - len)(rng));
      } else {
        starts = sample_train(partition_segments(units, config.segments), len, rng);
      }
      for (int s : starts) jobs.push_back({vid, s, rng()});
    }

    std::vector<Tensor> inputs(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
      NoGradGuard no_grad;
      Rng aug(jobs[j].aug_seed);
      const Tensor raw = snippet_stack(*dataset.videos[jobs[j].video], jobs[j].start, config.modality);
      inputs[j] = augment_train(raw, aug, kind, side);
    });
    const Tensor batch = stack(inputs).detach();

    const StepResult r = config.baseline
                             ? snippet_step(model, batch, labels, Mode::Train, &rng)
                             : tsn_step(model, batch, labels, config.segments, config.consensus, Mode::Train, &rng);
    const double lr = lr_at(step, config.schedule);
    opt.step(lr);

    result.losses.push_back(r.loss);
    interval_loss += r.loss;
    ++interval_steps;
    for (std::size_t b = 0; b < labels.size(); ++b) {
      interval_correct += r.predictions[b] == labels[b] ? 1 : 0;
      ++interval_videos;
    }
    if ((step + 1) % config.log_every == 0 || step + 1 == config.max_iters) {
      result.log.push_back({step + 1, lr, interval_loss / interval_steps,
                            static_cast<double>(interval_correct) / interval_videos});
      interval_loss = 0.0;
      interval_correct = interval_videos = interval_steps = 0;
    }
  }

  result.info.modality = modality_name(config.modality.modality);
  result.info.snippet_len = len;
  result.info.flow_bound = config.modality.flow_bound;
  result.info.crop_output = side;
  result.info.extra = config.to_kv();
  result.info.extra.set("steps_done", std::to_string(config.max_iters));
  return result;
}

void write_metrics(std::ostream& out, const std::vector<TrainLogEntry>& log, const KeyValues& header) {
  for (const auto& [k, v] : header.entries()) out << "# " << k << '=' << v << '\n';
  out << "# step\tlr\tloss\ttrain_acc\n";
  for (const auto& e : log) {
    out << e.step << '\t' << format_double(e.lr) << '\t' << format_double(e.loss) << '\t' << format_double(e.train_acc)
        << '\n';
  }
}

}  // namespace tsn
