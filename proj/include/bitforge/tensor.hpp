#pragma once

// A small reverse-mode differentiation engine over 64-bit floats.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record a backward rule on the result; operations on
// plain tensors build no graph and release their inputs immediately.
// Image tensors use N, C, H, W order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bitforge::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into the parents that require grad.
  std::function<void(Node& self)> backward;

  /// Lazily allocated gradient buffer.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds an operation result. If no parent requires a gradient the
  /// backward rule is dropped and the result is a plain constant.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  /// Allocates a zero gradient if needed.
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse pass from a single-element tensor, seeding d(self)/d(self) = 1.
  /// Gradients accumulate into every reachable tensor that requires them.
  void backward();

  /// Same values, no graph, no gradient.
  Tensor detach() const;
  /// Deep copy of values; keeps the requires_grad flag, drops history.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Piecewise operations (relu, max pools, absolute error) fold their branch
/// decisions into a per-thread hash while a BranchTrace is alive. Two
/// evaluations with equal signatures took the same linear piece everywhere.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t signature() const;

  static bool active();
  static void record(std::uint64_t decision);

 private:
  std::uint64_t saved_;
  bool was_active_;
};

}  // namespace bitforge::tensor
