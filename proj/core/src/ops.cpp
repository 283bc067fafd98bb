#include "tsn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tsn/error.hpp"

namespace tsn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, pad;
};

// cols is (C*K*K, OH*OW) row-major.
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result(a.shape(), std::move(out), "add", {a, b},
                             [ai, bi](std::span<const double> g) {
                               for (auto* t : {ai.get(), bi.get()}) {
                                 if (!t->requires_grad) continue;
                                 auto d = t->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto ai = a.impl(), bi = b.impl();
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [ai, bi](std::span<const double> g) {
                               if (ai->requires_grad) {
                                 auto d = ai->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bi->data[i];
                               }
                               if (bi->requires_grad) {
                                 auto d = bi->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * ai->data[i];
                               }
                             });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  auto ai = a.impl();
  return detail::make_result(a.shape(), std::move(out), "scale", {a},
                             [ai, factor](std::span<const double> g) {
                               auto d = ai->ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
                             });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto ai = a.impl();
  return detail::make_result(Shape{1}, {total}, "sum", {a}, [ai](std::span<const double> g) {
    auto d = ai->ensure_grad();
    for (double& v : d) v += g[0];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  auto xi = x.impl();
  return detail::make_result(x.shape(), std::move(out), "relu", {x},
                             [xi](std::span<const double> g) {
                               auto d = xi->ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (xi->data[i] > 0.0) d[i] += g[i];
                               }
                             });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c || weight.dim(3) != k) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const long span_h = static_cast<long>(h) + 2 * pad - static_cast<long>(k);
  const long span_w = static_cast<long>(w) + 2 * pad - static_cast<long>(k);
  if (span_h < 0 || span_w < 0) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_str(input.shape()) +
                         " vs weight " + shape_str(weight.shape()));
  }
  ConvGeometry g{c, h, w, k, static_cast<std::size_t>(span_h / stride) + 1,
                 static_cast<std::size_t>(span_w / stride) + 1, stride, pad};
  const std::size_t patch = c * k * k, plane = g.out_h * g.out_w;

  std::vector<double> out(n * o * plane);
  std::vector<double> cols(patch * plane);
  ConstMapMat wmat(weight.data().data(), static_cast<long>(o), static_cast<long>(patch));
  for (std::size_t s = 0; s < n; ++s) {
    im2col(input.data().data() + s * c * h * w, g, cols.data());
    ConstMapMat cmat(cols.data(), static_cast<long>(patch), static_cast<long>(plane));
    MapMat omat(out.data() + s * o * plane, static_cast<long>(o), static_cast<long>(plane));
    omat.noalias() = wmat * cmat;
  }

  auto xi = input.impl(), wi = weight.impl();
  return detail::make_result(
      Shape{n, o, g.out_h, g.out_w}, std::move(out), "conv2d", {input, weight},
      [xi, wi, g, n, o, patch, plane](std::span<const double> grad) {
        std::vector<double> cols(patch * plane);
        std::vector<double> dcols(patch * plane);
        const std::size_t in_size = g.channels * g.height * g.width;
        ConstMapMat wmat(wi->data.data(), static_cast<long>(o), static_cast<long>(patch));
        for (std::size_t s = 0; s < n; ++s) {
          ConstMapMat gmat(grad.data() + s * o * plane, static_cast<long>(o),
                           static_cast<long>(plane));
          if (wi->requires_grad) {
            im2col(xi->data.data() + s * in_size, g, cols.data());
            ConstMapMat cmat(cols.data(), static_cast<long>(patch), static_cast<long>(plane));
            MapMat dw(wi->ensure_grad().data(), static_cast<long>(o), static_cast<long>(patch));
            dw.noalias() += gmat * cmat.transpose();
          }
          if (xi->requires_grad) {
            MapMat dc(dcols.data(), static_cast<long>(patch), static_cast<long>(plane));
            dc.noalias() = wmat.transpose() * gmat;
            col2im_add(dcols.data(), g, xi->ensure_grad().data() + s * in_size);
          }
        }
      });
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride) {
  require_rank(input, 4, "max_pool2d", "input");
  if (kernel < 1 || stride < 1) throw ConfigError("max_pool2d: kernel and stride must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto k = static_cast<std::size_t>(kernel), s = static_cast<std::size_t>(stride);
  if (h < k || w < k) {
    throw DimensionError("max_pool2d: window " + std::to_string(k) + " larger than input " +
                         shape_str(input.shape()));
  }
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  auto x = input.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (oy * s) * w + ox * s;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = base + (oy * s + ky) * w + ox * s + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  auto xi = input.impl();
  return detail::make_result(Shape{n, c, oh, ow}, std::move(out), "max_pool2d", {input},
                             [xi, argmax = std::move(argmax)](std::span<const double> g) {
                               auto d = xi->ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) d[argmax[i]] += g[i];
                             });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  std::vector<double> out(n * c);
  auto x = input.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[p * plane + i];
    out[p] = acc / static_cast<double>(plane);
  }
  auto xi = input.impl();
  return detail::make_result(Shape{n, c}, std::move(out), "global_avg_pool", {input},
                             [xi, plane](std::span<const double> g) {
                               auto d = xi->ensure_grad();
                               const double inv = 1.0 / static_cast<double>(plane);
                               for (std::size_t p = 0; p < g.size(); ++p) {
                                 for (std::size_t i = 0; i < plane; ++i) d[p * plane + i] += g[p] * inv;
                               }
                             });
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "affine", "input");
  require_rank(weight, 2, "affine", "weight");
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(0);
  if (weight.dim(1) != d || bias.numel() != c) {
    throw DimensionError("affine: input " + shape_str(input.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(n * c);
  ConstMapMat x(input.data().data(), static_cast<long>(n), static_cast<long>(d));
  ConstMapMat wm(weight.data().data(), static_cast<long>(c), static_cast<long>(d));
  MapMat y(out.data(), static_cast<long>(n), static_cast<long>(c));
  y.noalias() = x * wm.transpose();
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b[j];
  }
  auto xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return detail::make_result(
      Shape{n, c}, std::move(out), "affine", {input, weight, bias},
      [xi, wi, bi, n, d, c](std::span<const double> g) {
        ConstMapMat gm(g.data(), static_cast<long>(n), static_cast<long>(c));
        if (xi->requires_grad) {
          ConstMapMat wm(wi->data.data(), static_cast<long>(c), static_cast<long>(d));
          MapMat dx(xi->ensure_grad().data(), static_cast<long>(n), static_cast<long>(d));
          dx.noalias() += gm * wm;
        }
        if (wi->requires_grad) {
          ConstMapMat x(xi->data.data(), static_cast<long>(n), static_cast<long>(d));
          MapMat dw(wi->ensure_grad().data(), static_cast<long>(c), static_cast<long>(d));
          dw.noalias() += gm.transpose() * x;
        }
        if (bi->requires_grad) {
          auto db = bi->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
          }
        }
      });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, BnMode mode,
                  const BatchNormOptions& options) {
  if (input.rank() != 4 && input.rank() != 2) {
    throw DimensionError("batch_norm: input must be NCHW or NC, got " + shape_str(input.shape()));
  }
  if (!(options.eps > 0.0)) throw ConfigError("batch_norm: epsilon must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t plane = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
  for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)}) {
    if (t->numel() != c) {
      throw DimensionError("batch_norm: per-channel tensor " + shape_str(t->shape()) +
                           " does not match input " + shape_str(input.shape()));
    }
  }
  if (mode == BnMode::Train && n < 2) {
    throw ConfigError("batch_norm: train mode needs batch size >= 2, got " + std::to_string(n));
  }
  const double count = static_cast<double>(n * plane);
  auto x = input.data();
  std::vector<double> mean(c), inv_std(c);
  if (mode == BnMode::Train) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / count;
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / count;
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + options.eps);
      rm[ch] = (1.0 - options.momentum) * rm[ch] + options.momentum * mu;
      rv[ch] = (1.0 - options.momentum) * rv[ch] + options.momentum * var * count / (count - 1.0);
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(rv[ch] + options.eps);
    }
  }

  std::vector<double> xhat(input.numel()), out(input.numel());
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[base + i] = (x[base + i] - mean[ch]) * inv_std[ch];
        out[base + i] = gm[ch] * xhat[base + i] + bt[ch];
      }
    }
  }

  const bool batch_stats = mode == BnMode::Train;
  auto xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  return detail::make_result(
      input.shape(), std::move(out), "batch_norm", {input, gamma, beta},
      [xi, gi, bi, n, c, plane, count, batch_stats, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](std::span<const double> g) {
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g[ch] += g[base + i];
              sum_gx[ch] += g[base + i] * xhat[base + i];
            }
          }
        }
        if (gi->requires_grad) {
          auto d = gi->ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_gx[ch];
        }
        if (bi->requires_grad) {
          auto d = bi->ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_g[ch];
        }
        if (!xi->requires_grad) return;
        auto dx = xi->ensure_grad();
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            const double k = gi->data[ch] * inv_std[ch];
            for (std::size_t i = 0; i < plane; ++i) {
              if (batch_stats) {
                dx[base + i] += k * (g[base + i] - sum_g[ch] / count -
                                     xhat[base + i] * sum_gx[ch] / count);
              } else {
                dx[base + i] += k * g[base + i];
              }
            }
          }
        }
      });
}

Tensor dropout(const Tensor& input, double drop_prob, Mode mode, Rng& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(drop_prob));
  }
  if (mode == Mode::Eval || drop_prob == 0.0) {
    auto xi = input.impl();
    return detail::make_result(input.shape(), std::vector<double>(input.data().begin(), input.data().end()),
                               "dropout", {input}, [xi](std::span<const double> g) {
                                 auto d = xi->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               });
  }
  const double keep_scale = 1.0 / (1.0 - drop_prob);
  std::bernoulli_distribution keep(1.0 - drop_prob);
  std::vector<double> mask(input.numel());
  std::vector<double> out(input.numel());
  auto x = input.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = keep(rng) ? keep_scale : 0.0;
    out[i] = x[i] * mask[i];
  }
  auto xi = input.impl();
  return detail::make_result(input.shape(), std::move(out), "dropout", {input},
                             [xi, mask = std::move(mask)](std::span<const double> g) {
                               auto d = xi->ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mask[i];
                             });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  auto z = logits.data();
  std::vector<double> prob(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ConfigError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                        " outside [0, " + std::to_string(c) + ")");
    }
    const double* row = z.data() + i * c;
    const double peak = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - peak);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(row[j] - peak - log_denom);
    loss -= row[labels[i]] - peak - log_denom;
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  auto zi = logits.impl();
  return detail::make_result(Shape{1}, {loss}, "softmax_cross_entropy", {logits},
                             [zi, n, c, prob = std::move(prob), lab = std::move(lab)](
                                 std::span<const double> g) {
                               auto d = zi->ensure_grad();
                               const double k = g[0] / static_cast<double>(n);
                               for (std::size_t i = 0; i < n; ++i) {
                                 for (std::size_t j = 0; j < c; ++j) {
                                   const double target = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                                   d[i * c + j] += k * (prob[i * c + j] - target);
                                 }
                               }
                             });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no tensors given");
  const Shape& inner = items.front().shape();
  const std::size_t each = items.front().numel();
  std::vector<double> out;
  out.reserve(each * items.size());
  std::vector<Tensor> inputs;
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const Tensor& t : items) {
    if (t.shape() != inner) {
      throw DimensionError("stack: shape mismatch " + shape_str(inner) + " vs " + shape_str(t.shape()));
    }
    out.insert(out.end(), t.data().begin(), t.data().end());
    inputs.push_back(t);
    impls.push_back(t.impl());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return detail::make_result(std::move(shape), std::move(out), "stack", std::move(inputs),
                             [impls = std::move(impls), each](std::span<const double> g) {
                               for (std::size_t k = 0; k < impls.size(); ++k) {
                                 if (!impls[k]->requires_grad) continue;
                                 auto d = impls[k]->ensure_grad();
                                 for (std::size_t i = 0; i < each; ++i) d[i] += g[k * each + i];
                               }
                             });
}

}  // namespace tsn
