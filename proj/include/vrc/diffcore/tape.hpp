#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vrc/diffcore/tensor.hpp"

namespace vrc::diff {

// A learnable array and its gradient slot.
struct Parameter {
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const noexcept { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Receives the node's own value and gradient; grad_in[i] is null when input
// i does not need a gradient.
using BackwardFn = std::function<void(const Tensor& value, const Tensor& grad_out,
                                      std::span<Tensor* const> grad_in)>;

// Records primitive applications in execution order (which is a topological
// order) and replays them backwards. Rebuilt for every forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Input whose gradient is retained on the tape (read back with grad()).
  Var leaf(Tensor value);
  // Reads the parameter's current value; backward() adds into p.grad.
  Var param(Parameter& p, const std::string* name = nullptr);

  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  // Seeds d(root)/d(root) = 1 and visits every node once in reverse order.
  // Node gradients are reset on each call; parameter slots accumulate.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  // Zeros when the node was not reached by the last backward pass.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::uint32_t id) const { return nodes_[id].op; }

  // Throws NumericError naming the first node holding a non-finite value.
  void check_finite() const;

 private:
  struct Node {
    const char* op = "";
    const std::string* label = nullptr;
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  // deque: node addresses stay stable while the tape grows, so backward
  // closures may hold references to input values.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace vrc::diff
