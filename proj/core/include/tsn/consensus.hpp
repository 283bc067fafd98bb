#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/tensor.hpp"

namespace tsn {

enum class ConsensusType { EvenAverage, Max, WeightedAverage };

/// Aggregation g applied class-wise over the K snippet scores.
struct ConsensusKind {
  ConsensusType type = ConsensusType::EvenAverage;
  std::vector<double> weights;  // WeightedAverage only; non-negative, sums to 1

  static ConsensusKind even_average() { return {}; }
  static ConsensusKind max() { return {ConsensusType::Max, {}}; }
  static ConsensusKind weighted(std::vector<double> weights);
  /// "avg", "max" or "weighted" (uniform weights over `segments`).
  static ConsensusKind parse(const std::string& name, int segments);
  std::string name() const;
};

/// K x C snippet scores plus the consensus G and the context backward needs.
struct ScoreMatrix {
  std::size_t segments = 0, classes = 0;
  std::vector<double> scores;     // row-major K x C
  std::vector<double> consensus;  // C
  std::vector<std::size_t> argmax_rows;  // per class, Max only
};

ScoreMatrix consensus_forward(std::span<const double> scores, std::size_t segments, std::size_t classes,
                              const ConsensusKind& kind);
/// dScores (K x C) from dG (C).
std::vector<double> consensus_backward(std::span<const double> grad_consensus, const ConsensusKind& kind,
                                       const ScoreMatrix& saved);

/// -(G_y - log sum_j exp G_j), evaluated with max subtraction.
double tsn_loss(std::span<const double> consensus, int label);
/// softmax(G) - onehot(y).
std::vector<double> tsn_loss_grad(std::span<const double> consensus, int label);

/// Differentiable consensus over a (B*K, C) score tensor whose rows are
/// grouped per video; returns (B, C).
Tensor segmental_consensus(const Tensor& scores, int segments, const ConsensusKind& kind);

struct StepResult {
  double loss = 0.0;
  std::vector<int> predictions;  // argmax of G per video
  Tensor consensus;              // (B, C)
};

/// One TSN forward/backward: the B*K snippets go through the same parameters,
/// the consensus reduces each video's K rows, and the video-level loss is
/// back-propagated. Model gradients are zeroed first and hold the result.
StepResult tsn_step(BackboneModel& model, const Tensor& snippets, std::span<const int> labels, int segments,
                    const ConsensusKind& kind, Mode mode, Rng* rng);

/// Snippet-level baseline with no consensus: cross-entropy on every row.
StepResult snippet_step(BackboneModel& model, const Tensor& snippets, std::span<const int> labels, Mode mode,
                        Rng* rng);

}  // namespace tsn
