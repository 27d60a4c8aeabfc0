#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mplexnet::diffcore {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of 64-bit reals with an optional gradient slot.
/// Copies share the underlying storage; ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;
  std::span<const double> values() const;
  /// Mutable access for parameter updates and loading. Do not call on a tensor
  /// whose value was captured by a pending backward pass.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient values; zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Identity of the underlying storage (used to assert tied weights).
  const void* storage_id() const { return node_.get(); }

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a one-element tensor, then frees the
/// recorded computation. Leaf gradients are summed over all uses.
void backward(const Tensor& loss);

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

/// Disables recording for its lifetime (inference, evaluation).
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
/// Creates an op result. Records parents and the backward rule only when
/// recording is enabled and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace mplexnet::diffcore
