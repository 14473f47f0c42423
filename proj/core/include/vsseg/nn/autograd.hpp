#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vsseg/nn/tensor.hpp"

namespace vsseg::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `backward_fn` reads `grad` of this node
// and accumulates into the grads of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  // Zero-initialized on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool defined() const { return static_cast<bool>(node_); }

  void zero_grad();
  // Reverse sweep from a single-element value, seeding d(self)/d(self) = 1.
  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Builds a result node; records the tape edge only when grad mode is on and
// some input requires a gradient.
Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward_fn);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace vsseg::nn
