#include "hinet/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hinet {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(numel_of(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (numel_of(shape) != values.size())
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->value.assign(values.begin(), values.end());
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->ensure_grad();
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= node_->shape.size())
    throw DimensionError("dimension " + std::to_string(i) + " out of range for " + to_string(node_->shape));
  return node_->shape[i];
}

double Tensor::item() const {
  if (node_->value.size() != 1)
    throw ContractError("item() on tensor with shape " + to_string(node_->shape));
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad.size() == node_->value.size())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  else
    node_->ensure_grad();
}

Tensor Tensor::detach() const { return Tensor(node_->shape, std::vector<double>(node_->value.begin(), node_->value.end())); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Graph::Graph(const Tensor& root) : root_(root) {
  // Iterative post-order DFS; recursion depth would track network depth otherwise.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  auto* start = root.node().get();
  if (!start->requires_grad) return;
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void Graph::backward() {
  auto* root = root_.node().get();
  if (root->value.size() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " + to_string(root->shape));
  if (order_.empty()) return;
  // Intermediate gradients start from zero; leaves keep accumulating.
  for (auto* n : order_) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
    else n->ensure_grad();
  }
  root->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(n->grad);
  }
}

void backward(const Tensor& loss) { Graph(loss).backward(); }

}  // namespace hinet
