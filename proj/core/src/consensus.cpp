#include "tsn/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsn/error.hpp"
#include "tsn/ops.hpp"

namespace tsn {

ConsensusKind ConsensusKind::weighted(std::vector<double> weights) {
  if (weights.empty()) throw ConfigError("weighted consensus needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("weighted consensus weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("weighted consensus weights must sum to 1, got " + std::to_string(total));
  }
  return {ConsensusType::WeightedAverage, std::move(weights)};
}

ConsensusKind ConsensusKind::parse(const std::string& name, int segments) {
  if (name == "avg" || name == "average") return even_average();
  if (name == "max") return max();
  if (name == "weighted") {
    if (segments < 1) throw ConfigError("weighted consensus needs K >= 1");
    return weighted(std::vector<double>(static_cast<std::size_t>(segments), 1.0 / segments));
  }
  throw ConfigError("unknown consensus \"" + name + "\" (expected avg, max or weighted)");
}

std::string ConsensusKind::name() const {
  switch (type) {
    case ConsensusType::EvenAverage: return "avg";
    case ConsensusType::Max: return "max";
    case ConsensusType::WeightedAverage: return "weighted";
  }
  return "?";
}

ScoreMatrix consensus_forward(std::span<const double> scores, std::size_t segments, std::size_t classes,
                              const ConsensusKind& kind) {
  if (segments < 1) throw ConfigError("consensus: K must be >= 1");
  if (scores.size() != segments * classes) {
    throw DimensionError("consensus: " + std::to_string(scores.size()) + " scores for K=" +
                         std::to_string(segments) + ", C=" + std::to_string(classes));
  }
  if (kind.type == ConsensusType::WeightedAverage && kind.weights.size() != segments) {
    throw ConfigError("consensus: " + std::to_string(kind.weights.size()) + " weights for K=" +
                      std::to_string(segments));
  }
  ScoreMatrix m;
  m.segments = segments;
  m.classes = classes;
  m.scores.assign(scores.begin(), scores.end());
  m.consensus.assign(classes, 0.0);
  switch (kind.type) {
    case ConsensusType::EvenAverage:
      for (std::size_t i = 0; i < classes; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < segments; ++k) acc += scores[k * classes + i];
        m.consensus[i] = acc / static_cast<double>(segments);
      }
      break;
    case ConsensusType::Max:
      m.argmax_rows.assign(classes, 0);
      for (std::size_t i = 0; i < classes; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < segments; ++k) {
          if (scores[k * classes + i] > scores[best * classes + i]) best = k;
        }
        m.argmax_rows[i] = best;
        m.consensus[i] = scores[best * classes + i];
      }
      break;
    case ConsensusType::WeightedAverage:
      for (std::size_t i = 0; i < classes; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < segments; ++k) acc += kind.weights[k] * scores[k * classes + i];
        m.consensus[i] = acc;
      }
      break;
  }
  return m;
}

std::vector<double> consensus_backward(std::span<const double> grad_consensus, const ConsensusKind& kind,
                                       const ScoreMatrix& saved) {
  const std::size_t k_seg = saved.segments, c = saved.classes;
  if (grad_consensus.size() != c) {
    throw DimensionError("consensus backward: gradient has " + std::to_string(grad_consensus.size()) +
                         " entries for C=" + std::to_string(c));
  }
  std::vector<double> out(k_seg * c, 0.0);
  switch (kind.type) {
    case ConsensusType::EvenAverage:
      for (std::size_t k = 0; k < k_seg; ++k) {
        for (std::size_t i = 0; i < c; ++i) out[k * c + i] = grad_consensus[i] / static_cast<double>(k_seg);
      }
      break;
    case ConsensusType::Max:
      if (saved.argmax_rows.size() != c) throw ConfigError("consensus backward: max needs saved argmax rows");
      for (std::size_t i = 0; i < c; ++i) out[saved.argmax_rows[i] * c + i] = grad_consensus[i];
      break;
    case ConsensusType::WeightedAverage:
      if (kind.weights.size() != k_seg) throw ConfigError("consensus backward: weight count mismatch");
      for (std::size_t k = 0; k < k_seg; ++k) {
        for (std::size_t i = 0; i < c; ++i) out[k * c + i] = kind.weights[k] * grad_consensus[i];
      }
      break;
  }
  return out;
}

double tsn_loss(std::span<const double> consensus, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= consensus.size()) {
    throw ConfigError("loss: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(consensus.size()) + ")");
  }
  const double peak = *std::max_element(consensus.begin(), consensus.end());
  double denom = 0.0;
  for (double g : consensus) denom += std::exp(g - peak);
  return -(consensus[static_cast<std::size_t>(label)] - peak - std::log(denom));
}

std::vector<double> tsn_loss_grad(std::span<const double> consensus, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= consensus.size()) {
    throw ConfigError("loss: label " + std::to_string(label) + " outside range");
  }
  const double peak = *std::max_element(consensus.begin(), consensus.end());
  std::vector<double> out(consensus.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) denom += out[i] = std::exp(consensus[i] - peak);
  for (double& v : out) v /= denom;
  out[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

Tensor segmental_consensus(const Tensor& scores, int segments, const ConsensusKind& kind) {
  if (scores.rank() != 2) throw DimensionError("consensus: scores must be (B*K, C), got " + shape_str(scores.shape()));
  if (segments < 1 || scores.dim(0) % static_cast<std::size_t>(segments) != 0) {
    throw DimensionError("consensus: " + std::to_string(scores.dim(0)) + " rows not divisible by K=" +
                         std::to_string(segments));
  }
  const std::size_t k = static_cast<std::size_t>(segments), c = scores.dim(1), b = scores.dim(0) / k;
  std::vector<ScoreMatrix> saved;
  saved.reserve(b);
  std::vector<double> out(b * c);
  for (std::size_t v = 0; v < b; ++v) {
    saved.push_back(consensus_forward(scores.data().subspan(v * k * c, k * c), k, c, kind));
    std::copy(saved.back().consensus.begin(), saved.back().consensus.end(), out.begin() + static_cast<long>(v * c));
  }
  auto si = scores.impl();
  return detail::make_result(Shape{b, c}, std::move(out), "segmental_consensus", {scores},
                             [si, kind, saved = std::move(saved), k, c](std::span<const double> g) {
                               auto d = si->ensure_grad();
                               for (std::size_t v = 0; v < saved.size(); ++v) {
                                 const auto ds = consensus_backward(g.subspan(v * c, c), kind, saved[v]);
                                 for (std::size_t i = 0; i < k * c; ++i) d[v * k * c + i] += ds[i];
                               }
                             });
}

namespace {

std::vector<int> row_argmax(const Tensor& t) {
  const std::size_t n = t.dim(0), c = t.dim(1);
  std::vector<int> out(n);
  auto d = t.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<int>(std::max_element(d.begin() + static_cast<long>(i * c),
                                               d.begin() + static_cast<long>((i + 1) * c)) -
                              (d.begin() + static_cast<long>(i * c)));
  }
  return out;
}

}  // namespace

StepResult tsn_step(BackboneModel& model, const Tensor& snippets, std::span<const int> labels, int segments,
                    const ConsensusKind& kind, Mode mode, Rng* rng) {
  if (segments < 1) throw ConfigError("tsn_step: K must be >= 1");
  if (snippets.dim(0) != labels.size() * static_cast<std::size_t>(segments)) {
    throw DimensionError("tsn_step: " + std::to_string(snippets.dim(0)) + " snippets for " +
                         std::to_string(labels.size()) + " videos x K=" + std::to_string(segments));
  }
  model.zero_grad();
  Tensor scores = model.forward(snippets, mode, rng);
  Tensor consensus = segmental_consensus(scores, segments, kind);
  Tensor loss = softmax_cross_entropy(consensus, labels);
  loss.backward();
  return {loss.item(), row_argmax(consensus), consensus.detach()};
}

StepResult snippet_step(BackboneModel& model, const Tensor& snippets, std::span<const int> labels, Mode mode,
                        Rng* rng) {
  model.zero_grad();
  Tensor scores = model.forward(snippets, mode, rng);
  Tensor loss = softmax_cross_entropy(scores, labels);
  loss.backward();
  return {loss.item(), row_argmax(scores), scores.detach()};
}

}  // namespace tsn
