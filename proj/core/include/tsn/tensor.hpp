#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tsn {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// One recorded differentiable operation. The backward closure receives the
/// gradient of the op's output and accumulates into the inputs' grad buffers.
/// Saved forward context (argmax indices, batch statistics, masks) lives in
/// the closure's captures.
struct OpNode {
  std::string kind;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const double> grad_out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<OpNode> node;  // null for leaves

  /// Returns the grad buffer, allocating zeros on first use.
  std::span<double> ensure_grad();
};

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient values; all zeros if nothing has accumulated yet.
  std::vector<double> grad_values() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// New leaf holding a copy of the data, detached from any graph.
  Tensor detach() const;
  /// Deep copy that keeps the requires_grad flag but drops graph history.
  Tensor clone() const;
  Tensor reshaped(Shape shape) const;

  /// Reverse-mode sweep from a single-element tensor. Gradients accumulate
  /// into every reachable tensor that requires grad.
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result. Records a graph node when grad mode is on and any
/// input requires grad; otherwise returns a plain leaf.
Tensor make_result(Shape shape, std::vector<double> data, std::string kind,
                   std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward);

}  // namespace detail

}  // namespace tsn
