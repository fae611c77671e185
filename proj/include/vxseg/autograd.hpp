#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vxseg/tensor.hpp"

namespace vxseg {

enum class OpKind : std::uint8_t {
  input,
  parameter,
  conv3d,
  upscale,
  leaky_relu,
  batch_norm,
  concat,
  sigmoid,
  bce,
  weighted_sum,
  global_avg_pool,
  linear,
  slice,
  reshape,
};

std::string_view op_kind_name(OpKind kind);

// A trainable tensor with its gradient buffer. `trainable == false` freezes
// the parameter: backward passes leave its grad untouched.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
};

// Per-channel batch-norm running statistics.
struct NormState {
  std::string name;
  Tensor running_mean;
  Tensor running_var;
};

// Ordered, name-addressable parameter storage with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  NormState& add_norm(std::string name, std::int64_t channels);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  NormState& norm(const std::string& name);
  const NormState& norm(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::int64_t scalar_count() const;

  // Iteration in insertion order.
  std::deque<Parameter>& params() { return params_; }
  const std::deque<Parameter>& params() const { return params_; }
  std::deque<NormState>& norms() { return norms_; }
  const std::deque<NormState>& norms() const { return norms_; }

  void zero_grad();
  void set_trainable(bool on);

 private:
  std::deque<Parameter> params_;
  std::deque<NormState> norms_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::size_t> norm_index_;
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Records a forward computation so gradients can be propagated back in exact
// reverse recording order. One tape per training step; not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Value that never receives a gradient.
  Var constant(Tensor value);
  // Free leaf that receives a gradient readable through grad().
  Var leaf(Tensor value);
  // Leaf bound to a parameter; gradients accumulate into param.grad unless the
  // parameter is frozen.
  Var parameter(Parameter& param);

  Var record(Tensor value, OpKind kind, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  const std::string& label(Var v) const;

  // Gradient buffer of a node; zeros if nothing has been propagated to it.
  const Tensor& grad(Var v);
  // Adds `g` into the gradient of `v` (no-op when v does not require grad).
  void accumulate_grad(Var v, const Tensor& g);
  // Mutable gradient buffer for kernels that accumulate in place; callers
  // must check requires_grad first.
  Tensor& grad_buffer(Var v);

  // Propagates d(loss)/d(.) to every node that requires grad. `loss` must be
  // a one-element tensor recorded on this tape.
  void backward(Var loss);

  // Layer label attached to subsequently recorded nodes (used in numeric
  // error messages).
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }

  std::size_t node_count() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    OpKind kind;
    bool requires_grad;
    Parameter* param = nullptr;
    BackwardFn backward;
    std::string label;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  std::string scope_;
  bool backward_done_ = false;
};

// Negative-control hook for the gradient checker: while set, every backward
// step of `kind` sees its incoming gradient multiplied by `scale`. Process
// global and not thread-safe; pass std::nullopt to clear.
void set_backward_fault(std::optional<OpKind> kind, float scale = 1.05f);

}  // namespace vxseg
