#pragma once

#include <cstddef>
#include <span>

#include "tsn/tensor.hpp"

namespace tsn {

enum class Mode { Train, Eval };

/// Batch-norm behaviour. Frozen normalizes with running statistics while the
/// surrounding model trains, and never writes them.
enum class BnMode { Train, Frozen, Eval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor relu(const Tensor& x);

/// 2-D cross-correlation, NCHW input against OIKK weight, no bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int pad);

/// Square-window max pooling. Ties go to the lowest linear index in the window.
Tensor max_pool2d(const Tensor& input, int kernel, int stride);

/// NCHW -> NC mean over the spatial extent.
Tensor global_avg_pool(const Tensor& input);

/// Fully connected layer: (N, D) x (C, D)^T + (C).
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Per-channel batch normalization over an NCHW or NC tensor. In Train mode the
/// batch statistics (population variance) normalize the input and the running
/// statistics move by an exponential average holding the unbiased variance.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, BnMode mode,
                  const BatchNormOptions& options = {});

/// Inverted dropout: survivors are scaled by 1/(1-drop_prob) so Eval is identity.
Tensor dropout(const Tensor& input, double drop_prob, Mode mode, Rng& rng);

/// Mean softmax cross-entropy of (N, C) logits against N labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Stacks equally shaped tensors along a new leading axis; differentiable.
Tensor stack(std::span<const Tensor> items);

}  // namespace tsn
