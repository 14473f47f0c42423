#include "vsseg/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace vsseg::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

void Node::accumulate(const Tensor& g) { grad_buffer() += g; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::backward() const {
  if (!node_) throw std::logic_error("backward on undefined Var");
  if (node_->value.numel() != 1) throw std::logic_error("backward requires a single-element value");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && child->backward_fn && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Intermediate grads are released so a retained graph does not pin memory.
  for (Node* n : order) {
    if (n != node_.get() && n->backward_fn) n->grad = Tensor();
  }
}

Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Var& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Var& in : inputs) node->inputs.push_back(in.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace vsseg::nn
