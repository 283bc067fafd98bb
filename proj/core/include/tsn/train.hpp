#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/consensus.hpp"
#include "tsn/dataset.hpp"
#include "tsn/kv_file.hpp"
#include "tsn/optim.hpp"
#include "tsn/snippet.hpp"

namespace tsn {

struct TrainConfig {
  ModalityConfig modality = ModalityConfig::defaults(Modality::Rgb);
  int segments = kDefaultSegments;
  ConsensusKind consensus;
  /// Snippet-level training without consensus: one uniformly drawn snippet per
  /// video, cross-entropy per snippet.
  bool baseline = false;
  int batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 0.0;
  LrSchedule schedule;
  int max_iters = 200;
  double dropout = 0.5;
  bool partial_bn = false;
  std::string init_from;  // checkpoint directory, optional
  std::uint64_t seed = 1;
  BackboneSpec backbone;  // input_channels follows the modality; input_size is the crop output side
  int log_every = 10;

  /// "desk", "full-spatial" or "full-temporal".
  static TrainConfig preset(const std::string& name);
  void validate() const;
  KeyValues to_kv() const;
};

struct TrainLogEntry {
  int step = 0;  // last step of the interval (1-based count of completed steps)
  double lr = 0.0;
  double loss = 0.0;       // mean over the interval
  double train_acc = 0.0;  // fraction of correct video predictions over the interval
};

struct TrainResult {
  BackboneModel model;
  CheckpointInfo info;
  std::vector<double> losses;  // every step
  std::vector<TrainLogEntry> log;
};

/// Runs SGD with momentum on TSN (or baseline) steps. Deterministic for a
/// given config and dataset regardless of worker count.
TrainResult train(const TrainConfig& config, const Dataset& dataset);

/// Model the trainer starts from: a fresh He-initialized backbone, or the
/// init-from checkpoint (cross-modality initialized when it is an RGB model
/// and the target modality is not).
BackboneModel initial_model(const TrainConfig& config, const Dataset& dataset, Rng& rng);

/// Tab-separated `step lr loss train_acc`, preceded by '#' header lines.
void write_metrics(std::ostream& out, const std::vector<TrainLogEntry>& log, const KeyValues& header);

}  // namespace tsn
