#include "bitforge/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace bitforge::tensor {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (tensor::numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(data.size()) +
                                " values do not fill shape " + to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = tensor::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_op(const char* op, Shape shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(data), false);
  out.node_->op = op;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
  }
  return out;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::logic_error("Tensor::item on tensor of shape " + to_string(shape()));
  }
  return node_->data[0];
}

void Tensor::backward() {
  if (numel() != 1) {
    throw std::logic_error("backward() needs a single-element tensor, got shape " +
                           to_string(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order with the root last.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

namespace {
thread_local bool trace_on = false;
thread_local std::uint64_t trace_hash = 0;
}  // namespace

BranchTrace::BranchTrace() : saved_(trace_hash), was_active_(trace_on) {
  trace_on = true;
  trace_hash = 0xcbf29ce484222325ull;
}

BranchTrace::~BranchTrace() {
  trace_on = was_active_;
  trace_hash = saved_;
}

std::uint64_t BranchTrace::signature() const { return trace_hash; }

bool BranchTrace::active() { return trace_on; }

void BranchTrace::record(std::uint64_t decision) {
  trace_hash = (trace_hash ^ decision) * 0x100000001b3ull;
}

}  // namespace bitforge::tensor
