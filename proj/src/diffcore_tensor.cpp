#include "mplexnet/diffcore/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mplexnet/error.hpp"

namespace mplexnet::diffcore {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
  if (numel(shape) != values.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw DimensionError("axis out of range for " + shape_str(node_->shape));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw DimensionError("backward() needs a one-element loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Free the tape: interior nodes drop their closures, parents and gradients.
  for (auto* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      node->grad.clear();
    }
  }
}

}  // namespace mplexnet::diffcore
