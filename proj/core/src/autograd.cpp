#include "amfusion/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "amfusion/error.hpp"

namespace amfusion {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.empty()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
  } else {
    grad.add_(g);
  }
}

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  if (g_grad_enabled) {
    for (const Var& p : parents) any = any || p.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root) throw Error(ErrorKind::BadShape, "backward on an empty Var");
  if (root.value().size() != 1) {
    throw Error(ErrorKind::BadShape, "backward root must be a scalar, got " + root.shape().str());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed order is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].node();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Parameter::Parameter() : var_(Var::leaf(Tensor(), true)) {}

Parameter::Parameter(Tensor init) : var_(Var::leaf(std::move(init), true)) {}

Parameter::Parameter(const Parameter& other)
    : var_(Var::leaf(other.value(), other.trainable())) {}

Parameter& Parameter::operator=(const Parameter& other) {
  if (this != &other) var_ = Var::leaf(other.value(), other.trainable());
  return *this;
}

void Parameter::zero_grad() { var_.node()->grad = Tensor(); }

}  // namespace amfusion
