#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "amfusion/tensor.hpp"

namespace amfusion {

class Var;

/// One vertex of the reverse-mode tape. `backward` reads `grad` and
/// accumulates into the parents' gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialized gradient buffer shaped like `value`.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

/// Shared handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Gradient accumulated by the last backward pass (empty if none reached it).
  const Tensor& grad() const { return node_->grad; }
  Node* node() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a result node. Parents and the backward closure are dropped when no
/// parent needs a gradient or when gradient recording is disabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Seeds d(root)/d(root) = 1 and propagates through the tape. `root` must hold
/// a single element.
void backward(const Var& root);

bool grad_enabled();

/// Disables tape recording for its lifetime (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// A learnable tensor. Copying a Parameter deep-copies its value so that
/// models have value semantics.
class Parameter {
 public:
  Parameter();
  explicit Parameter(Tensor init);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const Var& var() const { return var_; }
  Tensor& value() { return var_.node()->value; }
  const Tensor& value() const { return var_.node()->value; }
  Tensor& grad() { return var_.node()->grad_buffer(); }
  void zero_grad();

  bool trainable() const { return var_.node()->requires_grad; }
  void set_trainable(bool trainable) { var_.node()->requires_grad = trainable; }

 private:
  Var var_;
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};
using ParameterList = std::vector<NamedParameter>;

}  // namespace amfusion
