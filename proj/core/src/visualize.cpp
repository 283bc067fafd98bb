#include "tsn/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsn/error.hpp"

namespace tsn {

KeyValues VisualizeOptions::to_kv() const {
  KeyValues kv;
  kv.set("iterations", std::to_string(iterations));
  kv.set("step", format_double(step));
  kv.set("blur_every", std::to_string(blur_every));
  kv.set("blur_sigma", format_double(blur_sigma));
  kv.set("noise_std", format_double(noise_std));
  kv.set("bound", format_double(bound));
  kv.set("seed", std::to_string(seed));
  return kv;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;
  return k;
}

// Index into [0, n) of the half-sample symmetric extension (... 1 0 | 0 1 ... n-1 | n-1 ...).
std::size_t reflect(long i, long n) {
  const long period = 2 * n;
  long m = ((i % period) + period) % period;
  if (m >= n) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

void blur_line(const double* src, double* dst, std::size_t n, std::size_t stride, const std::vector<double>& k) {
  const long radius = static_cast<long>(k.size() / 2);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long j = -radius; j <= radius; ++j) {
      acc += k[static_cast<std::size_t>(j + radius)] * src[reflect(static_cast<long>(i) + j, static_cast<long>(n)) * stride];
    }
    dst[i * stride] = acc;
  }
}

}  // namespace

Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (image.rank() != 3) throw DimensionError("gaussian_blur: expected (C, H, W), got " + shape_str(image.shape()));
  if (!(sigma > 0)) throw ConfigError("gaussian_blur: sigma must be > 0");
  const auto k = gaussian_kernel(sigma);
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> tmp(image.numel()), out(image.numel());
  const double* src = image.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * h * w;
    for (std::size_t y = 0; y < h; ++y) blur_line(src + base + y * w, tmp.data() + base + y * w, w, 1, k);
    for (std::size_t x = 0; x < w; ++x) blur_line(tmp.data() + base + x, out.data() + base + x, h, w, k);
  }
  return Tensor(image.shape(), std::move(out));
}

VisualizeResult visualize_class(BackboneModel& model, int target_class, const VisualizeOptions& options) {
  const BackboneSpec& spec = model.spec();
  if (target_class < 0 || target_class >= spec.num_classes) {
    throw ConfigError("visualize: class " + std::to_string(target_class) + " outside [0, " +
                      std::to_string(spec.num_classes) + ")");
  }
  if (options.iterations < 0 || options.blur_every < 0 || !(options.step > 0) || !(options.bound > 0)) {
    throw ConfigError("visualize: invalid options");
  }
  const auto ch = static_cast<std::size_t>(spec.input_channels), side = static_cast<std::size_t>(spec.input_size);
  Rng rng(options.seed);
  Tensor x = Tensor::randn({ch, side, side}, rng, options.noise_std);
  for (double& v : x.mutable_data()) v = std::clamp(v, -options.bound, options.bound);

  VisualizeResult result;
  const auto cls = static_cast<std::size_t>(target_class);
  auto score_and_grad = [&](bool want_grad, std::vector<double>* grad) {
    Tensor input = x.reshaped({1, ch, side, side}).detach();
    if (!want_grad) {
      NoGradGuard guard;
      return model.forward(input, Mode::Eval).data()[cls];
    }
    input.set_requires_grad(true);
    model.zero_grad();
    const Tensor scores = model.forward(input, Mode::Eval);
    std::vector<double> pick(scores.numel(), 0.0);
    pick[cls] = 1.0;
    const Tensor objective = sum(mul(scores, Tensor(scores.shape(), std::move(pick))));
    objective.backward();
    *grad = input.grad_values();
    return scores.data()[cls];
  };

  result.score_trace.push_back(score_and_grad(false, nullptr));
  std::vector<double> g;
  for (int it = 0; it < options.iterations; ++it) {
    score_and_grad(true, &g);
    double mean_abs = 0.0;
    for (double v : g) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(g.size());
    if (mean_abs > 0) {
      auto d = x.mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = std::clamp(d[i] + options.step * g[i] / mean_abs, -options.bound, options.bound);
      }
    }
    if (options.blur_every > 0 && (it + 1) % options.blur_every == 0) x = gaussian_blur(x, options.blur_sigma);
    result.score_trace.push_back(score_and_grad(false, nullptr));
  }
  model.zero_grad();
  result.image = x;
  return result;
}

std::pair<double, double> mean_flow(const Tensor& flow_input, double flow_bound) {
  if (flow_input.rank() != 3 || flow_input.dim(0) % 2 != 0) {
    throw DimensionError("mean_flow: expected (2L, H, W), got " + shape_str(flow_input.shape()));
  }
  const std::size_t plane = flow_input.dim(1) * flow_input.dim(2);
  const std::size_t fields = flow_input.dim(0) / 2;
  const auto d = flow_input.data();
  double u = 0.0, v = 0.0;
  for (std::size_t f = 0; f < fields; ++f) {
    for (std::size_t i = 0; i < plane; ++i) {
      u += d[(2 * f) * plane + i];
      v += d[(2 * f + 1) * plane + i];
    }
  }
  const double n = static_cast<double>(fields * plane);
  // x = byte/255 - 0.5 and flow = byte * 2b/255 - b, so flow = 2b * x.
  return {2.0 * flow_bound * u / n, 2.0 * flow_bound * v / n};
}

double flow_angle_deg(double u, double v) { return std::atan2(-v, u) * 180.0 / std::numbers::pi; }

}  // namespace tsn
