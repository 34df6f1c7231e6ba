#include "vrc/diffcore/tape.hpp"

#include <cstddef>

#include "vrc/errors.hpp"

namespace vrc::diff {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p, const std::string* name) {
  Node n;
  n.op = "param";
  n.label = name;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    VRC_REQUIRE(v.valid() && &v.tape() == this, std::string(op) + ": input from another tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(Var root) {
  VRC_REQUIRE(root.valid() && &root.tape() == this, "backward: root not on this tape");
  VRC_REQUIRE(nodes_[root.id()].value.size() == 1, "backward: root must be scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  Node& r = nodes_[root.id()];
  r.grad = Tensor(r.value.shape(), 1.0);

  std::vector<Tensor*> grad_in;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    grad_in.assign(n.inputs.size(), nullptr);
    for (std::size_t j = 0; j < n.inputs.size(); ++j) {
      Node& in = nodes_[n.inputs[j]];
      if (!in.requires_grad) continue;
      if (in.grad.empty()) in.grad = Tensor(in.value.shape());
      grad_in[j] = &in.grad;
    }
    n.backward(n.value, n.grad, grad_in);
  }

  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Parameter& p = *n.param;
    if (p.grad.size() != p.value.size()) p.zero_grad();
    auto dst = p.grad.data();
    auto src = n.grad.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

void Tape::check_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.value.all_finite()) continue;
    std::string what = "non-finite value at node #" + std::to_string(i) + " (" + n.op;
    if (n.label) what += " '" + *n.label + "'";
    throw NumericError(what + ", shape " + shape_string(n.value.shape()) + ")");
  }
}

}  // namespace vrc::diff
