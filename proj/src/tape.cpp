// SPDX-License-Identifier: Apache-2.0
#include "unlearn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn {

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": " + detail);
}

void require_rank2(OpKind kind, const Tensor& t) {
  if (t.rank() < 1 || t.rank() > 2) shape_error(kind, "expected rank-2 operand, got " + t.shape_string());
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::Affine: return "affine";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Tanh: return "tanh";
    case OpKind::Concat: return "concat";
    case OpKind::SumSquares: return "sum_squares";
    case OpKind::SumAbs: return "sum_abs";
    case OpKind::Sum: return "sum";
    case OpKind::StopGradient: return "stop_gradient";
  }
  return "unknown";
}

Tape::BindingId Tape::bind(const ParamVector& params, ParamMode mode) {
  bindings_.push_back(Binding{&params, mode});
  return bindings_.size() - 1;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  require_rank2(OpKind::Input, value);
  return push(Node{OpKind::Input, {}, std::move(value), false});
}

Var Tape::param(BindingId binding, std::string_view name) {
  const Binding& b = bindings_.at(binding);
  const Segment& seg = b.params->segment(name);
  auto src = b.params->values(seg);
  Tensor value = Tensor::matrix(seg.rows, seg.cols, std::vector<double>(src.begin(), src.end()));
  Node n{OpKind::Param, {}, std::move(value), b.mode == ParamMode::Trainable};
  n.binding = binding;
  n.offset = seg.offset;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var weight) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  if (xv.cols() != wv.cols()) {
    shape_error(OpKind::Affine, "input " + xv.shape_string() + " incompatible with weight " + wv.shape_string());
  }
  const std::size_t rows = xv.rows(), in = xv.cols(), out = wv.rows();
  Tensor y = Tensor::matrix(rows, out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * in;
    double* yr = y.data().data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = wv.data().data() + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      yr[o] = acc;
    }
  }
  return push(Node{OpKind::Affine, {x.id, weight.id}, std::move(y), requires_grad(x) || requires_grad(weight)});
}

Var Tape::affine(Var x, Var weight, Var bias) {
  const std::size_t out = value(weight).rows();
  if (value(bias).rows() != 1 || value(bias).cols() != out) {
    shape_error(OpKind::Affine, "bias " + value(bias).shape_string() + " must be 1x" + std::to_string(out));
  }
  Var y = affine(x, weight);
  Node& n = nodes_[y.id];
  const Tensor& bv = nodes_[bias.id].value;
  for (std::size_t r = 0; r < n.value.rows(); ++r) {
    auto row = n.value.row_span(r);
    for (std::size_t o = 0; o < out; ++o) row[o] += bv[o];
  }
  n.inputs.push_back(bias.id);
  n.requires_grad = n.requires_grad || requires_grad(bias);
  return y;
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error(OpKind::Add, av.shape_string() + " vs " + bv.shape_string());
  Tensor y = Tensor::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return push(Node{OpKind::Add, {a.id, b.id}, std::move(y), requires_grad(a) || requires_grad(b)});
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error(OpKind::Mul, av.shape_string() + " vs " + bv.shape_string());
  Tensor y = Tensor::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return push(Node{OpKind::Mul, {a.id, b.id}, std::move(y), requires_grad(a) || requires_grad(b)});
}

Var Tape::tanh(Var a) {
  const Tensor& av = value(a);
  Tensor y = Tensor::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(av[i]);
  return push(Node{OpKind::Tanh, {a.id}, std::move(y), requires_grad(a)});
}

Var Tape::concat(std::initializer_list<Var> parts) {
  if (parts.size() == 0) shape_error(OpKind::Concat, "no operands");
  const std::size_t rows = value(*parts.begin()).rows();
  std::size_t cols = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    if (pv.rows() != rows) {
      shape_error(OpKind::Concat, "row count " + std::to_string(pv.rows()) + " vs " + std::to_string(rows));
    }
    cols += pv.cols();
    grad = grad || requires_grad(p);
    ids.push_back(p.id);
  }
  Tensor y = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t c0 = 0;
    for (Var p : parts) {
      auto src = value(p).row_span(r);
      for (std::size_t c = 0; c < src.size(); ++c) y.at(r, c0 + c) = src[c];
      c0 += src.size();
    }
  }
  return push(Node{OpKind::Concat, std::move(ids), std::move(y), grad});
}

Var Tape::sum_squares(Var a) {
  double acc = 0.0;
  for (double v : value(a).data()) acc += v * v;
  return push(Node{OpKind::SumSquares, {a.id}, Tensor::scalar(acc), requires_grad(a)});
}

Var Tape::sum_abs(Var a) {
  double acc = 0.0;
  for (double v : value(a).data()) acc += std::abs(v);
  return push(Node{OpKind::SumAbs, {a.id}, Tensor::scalar(acc), requires_grad(a)});
}

Var Tape::sum(Var a) {
  double acc = 0.0;
  for (double v : value(a).data()) acc += v;
  return push(Node{OpKind::Sum, {a.id}, Tensor::scalar(acc), requires_grad(a)});
}

Var Tape::stop_gradient(Var a) {
  return push(Node{OpKind::StopGradient, {a.id}, value(a), false});
}

Gradients Tape::backward(Var scalar_output) const { return backward(scalar_output, Tensor::scalar(1.0)); }

Gradients Tape::backward(Var output, const Tensor& adjoint) const {
  const Node& out = node(output);
  if (!out.value.same_shape(adjoint)) {
    throw std::invalid_argument("backward: adjoint " + adjoint.shape_string() + " does not match output " +
                                out.value.shape_string());
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(bindings_.size());
  for (const Binding& b : bindings_) grads.emplace_back(b.params->size(), 0.0);

  // Adjoints are allocated lazily; an empty tensor means "no contribution".
  std::vector<Tensor> adj(nodes_.size());
  adj[output.id] = adjoint;

  auto accumulate = [&](std::size_t id) -> Tensor& {
    Tensor& a = adj[id];
    if (a.size() == 0) a = Tensor::matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
    return a;
  };

  for (std::size_t k = output.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!n.requires_grad || adj[k].size() == 0) continue;
    const Tensor& g = adj[k];

    switch (n.kind) {
      case OpKind::Input:
      case OpKind::StopGradient:
        break;
      case OpKind::Param: {
        auto& dst = grads[n.binding];
        for (std::size_t i = 0; i < g.size(); ++i) dst[n.offset + i] += g[i];
        break;
      }
      case OpKind::Affine: {
        const std::size_t xi = n.inputs[0], wi = n.inputs[1];
        const Tensor& xv = nodes_[xi].value;
        const Tensor& wv = nodes_[wi].value;
        const std::size_t rows = xv.rows(), in = xv.cols(), outc = wv.rows();
        if (nodes_[xi].requires_grad) {
          Tensor& dx = accumulate(xi);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < outc; ++o) {
              const double go = g[r * outc + o];
              if (go == 0.0) continue;
              const double* wo = wv.data().data() + o * in;
              double* dxr = dx.data().data() + r * in;
              for (std::size_t i = 0; i < in; ++i) dxr[i] += go * wo[i];
            }
          }
        }
        if (nodes_[wi].requires_grad) {
          Tensor& dw = accumulate(wi);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xv.data().data() + r * in;
            for (std::size_t o = 0; o < outc; ++o) {
              const double go = g[r * outc + o];
              if (go == 0.0) continue;
              double* dwo = dw.data().data() + o * in;
              for (std::size_t i = 0; i < in; ++i) dwo[i] += go * xr[i];
            }
          }
        }
        if (n.inputs.size() == 3 && nodes_[n.inputs[2]].requires_grad) {
          Tensor& db = accumulate(n.inputs[2]);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < outc; ++o) db[o] += g[r * outc + o];
          }
        }
        break;
      }
      case OpKind::Add: {
        for (std::size_t in : n.inputs) {
          if (!nodes_[in].requires_grad) continue;
          Tensor& d = accumulate(in);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        break;
      }
      case OpKind::Mul: {
        const std::size_t ai = n.inputs[0], bi = n.inputs[1];
        if (nodes_[ai].requires_grad) {
          Tensor& d = accumulate(ai);
          const Tensor& other = nodes_[bi].value;
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
        }
        if (nodes_[bi].requires_grad) {
          Tensor& d = accumulate(bi);
          const Tensor& other = nodes_[ai].value;
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
        }
        break;
      }
      case OpKind::Tanh: {
        Tensor& d = accumulate(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case OpKind::Concat: {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        std::size_t c0 = 0;
        for (std::size_t in : n.inputs) {
          const std::size_t pc = nodes_[in].value.cols();
          if (nodes_[in].requires_grad) {
            Tensor& d = accumulate(in);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < pc; ++c) d[r * pc + c] += g[r * cols + c0 + c];
            }
          }
          c0 += pc;
        }
        break;
      }
      case OpKind::SumSquares: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor& d = accumulate(n.inputs[0]);
        for (std::size_t i = 0; i < xv.size(); ++i) d[i] += 2.0 * g[0] * xv[i];
        break;
      }
      case OpKind::SumAbs: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor& d = accumulate(n.inputs[0]);
        for (std::size_t i = 0; i < xv.size(); ++i) {
          const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
          d[i] += g[0] * s;
        }
        break;
      }
      case OpKind::Sum: {
        Tensor& d = accumulate(n.inputs[0]);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
        break;
      }
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace unlearn
