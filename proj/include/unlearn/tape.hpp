// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "unlearn/param_vector.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

enum class ParamMode {
  Trainable,  // leaves accumulate adjoints into the binding's gradient
  Frozen,     // leaves act as constants; adjoints still flow through to other inputs
};

enum class OpKind { Input, Param, Affine, Add, Mul, Tanh, Concat, SumSquares, SumAbs, Sum, StopGradient };

const char* op_name(OpKind kind);

/// Per-binding gradients returned by Tape::backward, each aligned with the
/// bound ParamVector. Frozen bindings come back as all-zero vectors.
class Gradients {
 public:
  explicit Gradients(std::vector<std::vector<double>> per_binding) : grads_(std::move(per_binding)) {}
  std::span<const double> of(std::size_t binding) const { return grads_.at(binding); }
  std::vector<double> take(std::size_t binding) { return std::move(grads_.at(binding)); }
  std::size_t bindings() const { return grads_.size(); }

 private:
  std::vector<std::vector<double>> grads_;
};

/// Records a computation over rank-2 tensors and replays adjoints in exact
/// reverse order of recording.
///
/// Primitives: affine map (y = x W^T + b), elementwise add and mul, tanh,
/// column concatenation, the squared-norm, L1-norm and plain sum reductions
/// (all to a 1x1 scalar), and stop_gradient. Shape errors throw
/// std::invalid_argument naming the primitive.
///
/// Bound ParamVectors are referenced, not copied, until `param` snapshots a
/// segment; they must outlive the calls to `param`.
class Tape {
 public:
  using BindingId = std::size_t;

  BindingId bind(const ParamVector& params, ParamMode mode);

  Var input(Tensor value);
  /// Leaf holding segment `name` of a bound ParamVector as a rows x cols tensor.
  Var param(BindingId binding, std::string_view name);

  Var affine(Var x, Var weight);
  Var affine(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var a);
  Var concat(std::initializer_list<Var> parts);
  Var sum_squares(Var a);
  Var sum_abs(Var a);
  Var sum(Var a);
  Var stop_gradient(Var a);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of <adjoint, value(output)> with respect to every trainable binding.
  Gradients backward(Var output, const Tensor& adjoint) const;
  /// Convenience for scalar outputs: adjoint 1.
  Gradients backward(Var scalar_output) const;

 private:
  struct Binding {
    const ParamVector* params;
    ParamMode mode;
  };
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    // Param leaves only.
    std::size_t binding = 0;
    std::size_t offset = 0;
  };

  Var push(Node node);
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Binding> bindings_;
  std::vector<Node> nodes_;
};

}  // namespace unlearn
