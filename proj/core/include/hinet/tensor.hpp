#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hinet {

using Shape = std::vector<std::size_t>;

// Error kinds shared by every module.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// Fixed 64-byte alignment keeps vectorised kernels on one code path, so
// results do not depend on where the allocator happened to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's output gradient and accumulates into the parents.
  std::function<void(std::span<const double>)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same node. Operations in
/// ops.hpp record themselves on the nodes they produce whenever any input
/// requires a gradient and gradient recording is enabled, which builds the
/// define-by-run graph consumed by Graph::backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Trainable leaf; its grad buffer is allocated (zeros) immediately.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient buffer; zeros when nothing has flowed into this tensor yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// Value copy detached from any graph.
  Tensor detach() const;
  /// Identity of the underlying graph node.
  std::uintptr_t id() const { return reinterpret_cast<std::uintptr_t>(node_.get()); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse topological view of everything a scalar root depends on.
class Graph {
 public:
  explicit Graph(const Tensor& root);

  /// Nodes in topological order (inputs before outputs).
  const std::vector<detail::Node*>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable node once.
  void backward();

 private:
  Tensor root_;
  std::vector<detail::Node*> order_;
};

/// Convenience: Graph(loss).backward().
void backward(const Tensor& loss);

}  // namespace hinet
