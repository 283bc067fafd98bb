#include "tsn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tsn/error.hpp"

namespace tsn {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor& x, double step) {
  NoGradGuard no_grad;
  auto d = x.mutable_data();
  std::vector<double> g(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double orig = d[i];
    d[i] = orig + step;
    const double up = f();
    d[i] = orig - step;
    const double down = f();
    d[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

BackboneSpec gradcheck_backbone_spec() {
  BackboneSpec s;
  s.input_channels = 2;
  s.input_size = 8;
  s.stages = {{4, 3, 1, true}, {6, 3, 1, false}};
  s.dropout_prob = 0.0;
  s.num_classes = 3;
  return s;
}

namespace {

// True when some video/class has its two largest snippet scores within gap.
bool max_tie(std::span<const double> scores, int videos, int segments, int classes, double gap) {
  for (int b = 0; b < videos; ++b) {
    for (int c = 0; c < classes; ++c) {
      double best = -INFINITY, second = -INFINITY;
      for (int k = 0; k < segments; ++k) {
        const double v = scores[static_cast<std::size_t>((b * segments + k) * classes + c)];
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (segments > 1 && best - second < gap) return true;
    }
  }
  return false;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (options.segments < 1 || options.videos < 1 || options.trials < 1) {
    throw ConfigError("gradcheck: segments, videos and trials must be >= 1");
  }
  if (options.baseline && options.segments != 1) throw ConfigError("gradcheck: the baseline loss uses K=1");
  GradcheckReport report;
  report.consensus = options.baseline ? "none" : options.consensus.name();
  report.segments = options.segments;
  const BackboneSpec spec = gradcheck_backbone_spec();
  const int k = options.segments;

  for (int trial = 0; trial < options.trials; ++trial) {
    Rng rng(options.seed * 1000003ULL + static_cast<std::uint64_t>(trial));
    BackboneModel model = BackboneModel::build(spec, rng);
    for (auto& st : model.stages()) {
      for (double& m : st.running_mean.mutable_data()) m = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      for (double& v : st.running_var.mutable_data()) v = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
      for (double& g : st.gamma.mutable_data()) g = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
      for (double& b : st.beta.mutable_data()) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    }
    const auto n = static_cast<std::size_t>(options.videos * k);
    const Shape one{static_cast<std::size_t>(spec.input_channels), static_cast<std::size_t>(spec.input_size),
                    static_cast<std::size_t>(spec.input_size)};
    std::vector<Tensor> items;
    for (std::size_t i = 0; i < n; ++i) {
      if (options.identical_snippets && i % static_cast<std::size_t>(k) != 0) {
        items.push_back(items.back());
      } else {
        items.push_back(Tensor::randn(one, rng));
      }
    }
    const Tensor snippets = stack(items).detach();
    std::vector<int> labels;
    for (int b = 0; b < options.videos; ++b) {
      labels.push_back(std::uniform_int_distribution<int>(0, spec.num_classes - 1)(rng));
    }

    auto loss_value = [&] {
      NoGradGuard guard;
      const Tensor scores = model.forward(snippets, Mode::Eval);
      if (options.baseline) return softmax_cross_entropy(scores, labels).item();
      return softmax_cross_entropy(segmental_consensus(scores, k, options.consensus), labels).item();
    };

    if (options.consensus.type == ConsensusType::Max && !options.baseline) {
      NoGradGuard guard;
      const Tensor scores = model.forward(snippets, Mode::Eval);
      if (max_tie(scores.data(), options.videos, k, spec.num_classes, options.tie_gap)) {
        ++report.trials_skipped;
        continue;
      }
    }

    if (options.baseline) {
      snippet_step(model, snippets, labels, Mode::Eval, nullptr);
    } else {
      tsn_step(model, snippets, labels, k, options.consensus, Mode::Eval, nullptr);
    }
    ++report.trials_run;
    for (auto& [name, tensor] : model.parameters()) {
      const std::vector<double> analytic = tensor.grad_values();
      Tensor param = tensor;
      const std::vector<double> numeric = numeric_gradient(loss_value, param, options.step);
      auto it = std::find_if(report.layers.begin(), report.layers.end(), [&](const auto& l) { return l.name == name; });
      if (it == report.layers.end()) {
        report.layers.push_back({name, 0.0, 0});
        it = report.layers.end() - 1;
      }
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        it->max_rel_error = std::max(it->max_rel_error, relative_error(analytic[i], numeric[i]));
      }
      it->checked += analytic.size();
      report.max_rel_error = std::max(report.max_rel_error, it->max_rel_error);
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace tsn
