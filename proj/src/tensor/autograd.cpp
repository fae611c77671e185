#include "vxseg/autograd.hpp"

#include <optional>

#include "vxseg/errors.hpp"

namespace vxseg {

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::conv3d: return "conv3d";
    case OpKind::upscale: return "upscale";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::batch_norm: return "batch_norm";
    case OpKind::concat: return "concat";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::bce: return "bce";
    case OpKind::weighted_sum: return "weighted_sum";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::linear: return "linear";
    case OpKind::slice: return "slice";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  VXSEG_REQUIRE(!index_.contains(name), "duplicate parameter name '", name, "'");
  index_.emplace(name, params_.size());
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

NormState& ParameterSet::add_norm(std::string name, std::int64_t channels) {
  VXSEG_REQUIRE(!norm_index_.contains(name), "duplicate norm state '", name, "'");
  norm_index_.emplace(name, norms_.size());
  norms_.push_back(NormState{std::move(name), Tensor({channels}, 0.0f), Tensor({channels}, 1.0f)});
  return norms_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  VXSEG_REQUIRE(it != index_.end(), "no parameter named '", name, "'");
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  VXSEG_REQUIRE(it != index_.end(), "no parameter named '", name, "'");
  return params_[it->second];
}

NormState& ParameterSet::norm(const std::string& name) {
  auto it = norm_index_.find(name);
  VXSEG_REQUIRE(it != norm_index_.end(), "no norm state named '", name, "'");
  return norms_[it->second];
}

const NormState& ParameterSet::norm(const std::string& name) const {
  auto it = norm_index_.find(name);
  VXSEG_REQUIRE(it != norm_index_.end(), "no norm state named '", name, "'");
  return norms_[it->second];
}

std::int64_t ParameterSet::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

void ParameterSet::set_trainable(bool on) {
  for (auto& p : params_) p.trainable = on;
}

const Tensor& Var::value() const {
  VXSEG_REQUIRE(valid(), "use of an unbound Var");
  return tape->value(*this);
}

Var Tape::constant(Tensor value) { return record(std::move(value), OpKind::input, false, {}); }

Var Tape::leaf(Tensor value) { return record(std::move(value), OpKind::input, true, {}); }

Var Tape::parameter(Parameter& param) {
  Var v = record(param.value, OpKind::parameter, param.trainable, {});
  nodes_.back().param = &param;
  nodes_.back().label = param.name;
  return v;
}

Var Tape::record(Tensor value, OpKind kind, bool requires_grad, BackwardFn backward) {
  Node n{std::move(value), Tensor{}, kind, requires_grad, nullptr, std::move(backward),
         scope_.empty() ? std::string(op_kind_name(kind))
                        : scope_ + "/" + std::string(op_kind_name(kind))};
  if (kind != OpKind::input && kind != OpKind::parameter && !n.value.all_finite()) {
    throw NumericError(detail::concat("non-finite output in layer '", n.label, "'"));
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  VXSEG_REQUIRE(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
                "Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  VXSEG_REQUIRE(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
                "Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v).kind; }
const std::string& Tape::label(Var v) const { return node(v).label; }

const Tensor& Tape::grad(Var v) {
  Node& n = node(v);
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor::zeros_like(n.value);
  }
  return n.grad;
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  VXSEG_REQUIRE(g.size() == n.value.size(), "gradient of shape ", shape_str(g.shape()),
                " does not match value ", shape_str(n.value.shape()));
  Tensor& buf = grad_buffer(v);
  float* dst = buf.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

namespace {
std::optional<OpKind> g_fault_kind;
float g_fault_scale = 1.0f;
}  // namespace

void set_backward_fault(std::optional<OpKind> kind, float scale) {
  g_fault_kind = kind;
  g_fault_scale = scale;
}

void Tape::backward(Var loss) {
  VXSEG_REQUIRE(loss.valid() && loss.tape == this,
                "backward called with a loss that was not produced by a forward pass on this tape");
  Node& root = node(loss);
  VXSEG_REQUIRE(root.value.size() == 1, "backward requires a scalar loss, got shape ",
                shape_str(root.value.shape()));
  VXSEG_REQUIRE(root.requires_grad, "loss does not depend on any differentiable input");

  for (auto& n : nodes_) n.grad = Tensor{};
  root.grad = Tensor(root.value.shape(), 1.0f);

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      if (n.param->trainable) {
        float* dst = n.param->grad.data();
        const float* src = n.grad.data();
        for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
      }
      continue;
    }
    if (n.backward) {
      if (g_fault_kind && *g_fault_kind == n.kind) {
        Tensor g = n.grad;
        for (auto& v : g.values()) v *= g_fault_scale;
        n.backward(*this, g);
      } else {
        n.backward(*this, n.grad);
      }
    }
  }
  backward_done_ = true;
}

}  // namespace vxseg
