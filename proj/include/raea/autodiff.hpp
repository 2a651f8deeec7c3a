#pragma once

// Reverse-mode automatic differentiation on a flat tape of tensor operations.
// The op set is exactly what the alignment network needs: linear maps, column
// concatenation, row gathers, pointwise activations, segment-wise softmax and
// weighted reduction, row normalization and reductions down to a scalar loss.
//
// Usage: build the forward computation through Tape methods (nodes are plain
// integer ids, topologically ordered by construction), then call
// backward(loss). Gradients accumulate into the registered Parameters; a tape
// can run backward once and is then consumed.
//
// Parameters are owned by the caller and must outlive the tape.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "raea/common.hpp"
#include "raea/tensor.hpp"

namespace raea::ad {

// NaN or Inf reaching any tape operation. A ContractViolation, but catchable
// on its own so training can surface overflow as a numeric failure.
struct NonFiniteValue : ContractViolation {
  using ContractViolation::ContractViolation;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape {
 public:
  using Id = std::int32_t;

  Id param(Parameter& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return it->second;
    contract(p.value.same_shape(p.grad), "parameter " + p.name + " grad/value shape mismatch");
    check_finite(p.value, "param(" + p.name + ")");
    Id id = push(Op::Leaf, {}, p.value, true);
    nodes_[id].param = &p;
    param_ids_.emplace(&p, id);
    params_.push_back(&p);
    return id;
  }

  Id constant(Tensor t) {
    check_finite(t, "constant");
    return push(Op::Leaf, {}, std::move(t), false);
  }

  // x[n×p] @ w[p×q] -> [n×q]
  Id matmul(Id x, Id w) {
    const Tensor& a = value(x);
    const Tensor& b = value(w);
    contract(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
             "matmul shape mismatch: " + shape_string(a) + " @ " + shape_string(b));
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    matmul_accumulate(a, b, out, false, false);
    return push(Op::MatMul, {x, w}, std::move(out), needs(x) || needs(w));
  }

  Id add(Id x, Id y) { return binary(Op::Add, x, y); }
  Id sub(Id x, Id y) { return binary(Op::Sub, x, y); }
  Id mul(Id x, Id y) { return binary(Op::Mul, x, y); }

  Id add_scalar(Id x, double c) {
    Tensor out = value(x);
    for (double& v : out.data) v += c;
    Id id = push(Op::AddScalar, {x}, std::move(out), needs(x));
    nodes_[id].scalar = c;
    return id;
  }

  Id scale(Id x, double c) {
    Tensor out = value(x);
    for (double& v : out.data) v *= c;
    Id id = push(Op::Scale, {x}, std::move(out), needs(x));
    nodes_[id].scalar = c;
    return id;
  }

  // Column-wise concatenation of rank-2 tensors with equal row counts.
  Id concat_cols(std::span<const Id> xs) {
    contract(!xs.empty(), "concat_cols requires at least one input");
    const std::size_t n = value(xs[0]).rows();
    std::size_t total = 0;
    bool any_grad = false;
    for (Id x : xs) {
      const Tensor& t = value(x);
      contract(t.rank() == 2 && t.rows() == n,
               "concat_cols row mismatch: " + shape_string(value(xs[0])) + " vs " + shape_string(t));
      total += t.cols();
      any_grad = any_grad || needs(x);
    }
    Tensor out = Tensor::zeros({n, total});
    std::size_t off = 0;
    for (Id x : xs) {
      const Tensor& t = value(x);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
      off += t.cols();
    }
    return push(Op::ConcatCols, std::vector<Id>(xs.begin(), xs.end()), std::move(out), any_grad);
  }

  Id concat_cols(std::initializer_list<Id> xs) {
    return concat_cols(std::span<const Id>(xs.begin(), xs.size()));
  }

  // out[i] = x[rows[i]], rows may repeat.
  Id gather_rows(Id x, std::vector<std::int32_t> rows) {
    const Tensor& t = value(x);
    contract(t.rank() == 2, "gather_rows requires rank-2 input");
    for (std::int32_t r : rows)
      contract(r >= 0 && static_cast<std::size_t>(r) < t.rows(), "gather_rows index out of range");
    Tensor out = Tensor::zeros({rows.size(), t.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < t.cols(); ++c) out.at(i, c) = t.at(rows[i], c);
    Id id = push(Op::GatherRows, {x}, std::move(out), needs(x));
    nodes_[id].indices = std::move(rows);
    return id;
  }

  Id relu(Id x) { return pointwise(Op::Relu, x, 0.0); }
  Id leaky_relu(Id x, double slope) { return pointwise(Op::LeakyRelu, x, slope); }
  Id elu(Id x) { return pointwise(Op::Elu, x, 0.0); }
  Id abs(Id x) { return pointwise(Op::Abs, x, 0.0); }
  // Pointwise sqrt of nonnegative inputs; subgradient 0 at 0.
  Id sqrt(Id x) { return pointwise(Op::Sqrt, x, 0.0); }

  // [n×d] -> [n×1]
  Id row_sum(Id x) {
    const Tensor& t = value(x);
    contract(t.rank() == 2, "row_sum requires rank-2 input");
    Tensor out = Tensor::zeros({t.rows(), 1});
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(r, c);
      out.at(r, 0) = s;
    }
    return push(Op::RowSum, {x}, std::move(out), needs(x));
  }

  // Sum of all elements -> scalar [1].
  Id sum(Id x) {
    const Tensor& t = value(x);
    double s = 0;
    for (double v : t.data) s += v;
    return push(Op::Sum, {x}, Tensor::scalar(s), needs(x));
  }

  Id reshape(Id x, std::vector<std::size_t> shape) {
    const Tensor& t = value(x);
    contract(Tensor::element_count(shape) == t.size(),
             "reshape element count mismatch for " + shape_string(t));
    Tensor out(std::move(shape), t.data);
    return push(Op::Reshape, {x}, std::move(out), needs(x));
  }

  Id flatten(Id x) { return reshape(x, {value(x).size()}); }

  // Softmax computed independently inside each segment. logits is rank-1
  // [m]; segments[i] in [0, n_segments) assigns item i to its group. Logits
  // are max-shifted per segment before exponentiation.
  Id segment_softmax(Id logits, std::vector<std::int32_t> segments, std::int32_t n_segments) {
    const Tensor& t = value(logits);
    contract(t.rank() == 1, "segment_softmax requires rank-1 logits, got " + shape_string(t));
    contract(segments.size() == t.size(), "segment_softmax: one segment id per logit");
    contract(n_segments >= 0, "segment_softmax: negative segment count");
    for (std::int32_t s : segments)
      contract(s >= 0 && s < n_segments, "segment_softmax: segment id out of range");
    const std::size_t m = t.size();
    std::vector<double> seg_max(static_cast<std::size_t>(n_segments),
                                -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < m; ++i)
      seg_max[segments[i]] = std::max(seg_max[segments[i]], t.data[i]);
    Tensor out = Tensor::zeros({m});
    std::vector<double> seg_sum(static_cast<std::size_t>(n_segments), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      out.data[i] = std::exp(t.data[i] - seg_max[segments[i]]);
      seg_sum[segments[i]] += out.data[i];
    }
    for (std::size_t i = 0; i < m; ++i) out.data[i] /= seg_sum[segments[i]];
    Id id = push(Op::SegmentSoftmax, {logits}, std::move(out), needs(logits));
    nodes_[id].indices = std::move(segments);
    nodes_[id].n_segments = n_segments;
    return id;
  }

  // out[s] = sum over items i with segments[i]==s of weights[i] * values[i,:].
  // Segments without items produce zero rows.
  Id weighted_segment_sum(Id weights, Id values, std::vector<std::int32_t> segments,
                          std::int32_t n_segments) {
    const Tensor& w = value(weights);
    const Tensor& v = value(values);
    contract(w.rank() == 1 && v.rank() == 2 && w.size() == v.rows(),
             "weighted_segment_sum shapes: " + shape_string(w) + ", " + shape_string(v));
    contract(segments.size() == w.size(), "weighted_segment_sum: one segment id per item");
    for (std::int32_t s : segments)
      contract(s >= 0 && s < n_segments, "weighted_segment_sum: segment id out of range");
    Tensor out = Tensor::zeros({static_cast<std::size_t>(n_segments), v.cols()});
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double wi = w.data[i];
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(segments[i], c) += wi * v.at(i, c);
    }
    Id id = push(Op::WeightedSegmentSum, {weights, values}, std::move(out),
                 needs(weights) || needs(values));
    nodes_[id].indices = std::move(segments);
    nodes_[id].n_segments = n_segments;
    return id;
  }

  // Rows scaled to unit L2 norm; all-zero rows pass through unchanged.
  Id l2_normalize_rows(Id x) {
    const Tensor& t = value(x);
    contract(t.rank() == 2, "l2_normalize_rows requires rank-2 input");
    Tensor out = t;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double sq = 0;
      for (std::size_t c = 0; c < t.cols(); ++c) sq += t.at(r, c) * t.at(r, c);
      const double norm = std::sqrt(sq);
      if (norm > 0)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) /= norm;
    }
    return push(Op::L2NormalizeRows, {x}, std::move(out), needs(x));
  }

  const Tensor& value(Id id) const {
    contract(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(), "invalid tape node id");
    return nodes_[id].value;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Zeroes the gradients of every
  // registered parameter, then accumulates d(loss)/d(param) into them.
  void backward(Id loss) {
    contract(!consumed_, "backward called twice on one tape");
    contract(value(loss).size() == 1, "backward requires a scalar loss, got " +
                                          shape_string(value(loss)));
    consumed_ = true;
    for (Parameter* p : params_) p->zero_grad();

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has_grad(nodes_.size(), false);
    auto grad_of = [&](Id id) -> Tensor& {
      if (!has_grad[id]) {
        grads[id] = Tensor::zeros(nodes_[id].value.shape);
        has_grad[id] = true;
      }
      return grads[id];
    };
    grad_of(loss).data[0] = 1.0;

    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!has_grad[id] || !n.needs_grad) continue;
      const Tensor& g = grads[id];
      switch (n.op) {
        case Op::Leaf:
          if (n.param)
            for (std::size_t i = 0; i < g.size(); ++i) n.param->grad.data[i] += g.data[i];
          break;
        case Op::MatMul: {
          const Tensor& a = nodes_[n.inputs[0]].value;
          const Tensor& b = nodes_[n.inputs[1]].value;
          if (needs(n.inputs[0])) matmul_accumulate(g, b, grad_of(n.inputs[0]), false, true);
          if (needs(n.inputs[1])) matmul_accumulate(a, g, grad_of(n.inputs[1]), true, false);
          break;
        }
        case Op::Add:
          for (int k = 0; k < 2; ++k)
            if (needs(n.inputs[k])) accumulate(grad_of(n.inputs[k]), g, 1.0);
          break;
        case Op::Sub:
          if (needs(n.inputs[0])) accumulate(grad_of(n.inputs[0]), g, 1.0);
          if (needs(n.inputs[1])) accumulate(grad_of(n.inputs[1]), g, -1.0);
          break;
        case Op::Mul: {
          const Tensor& a = nodes_[n.inputs[0]].value;
          const Tensor& b = nodes_[n.inputs[1]].value;
          if (needs(n.inputs[0])) {
            Tensor& ga = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * b.data[i];
          }
          if (needs(n.inputs[1])) {
            Tensor& gb = grad_of(n.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * a.data[i];
          }
          break;
        }
        case Op::AddScalar:
          if (needs(n.inputs[0])) accumulate(grad_of(n.inputs[0]), g, 1.0);
          break;
        case Op::Scale:
          if (needs(n.inputs[0])) accumulate(grad_of(n.inputs[0]), g, n.scalar);
          break;
        case Op::ConcatCols: {
          std::size_t off = 0;
          for (Id in : n.inputs) {
            const Tensor& t = nodes_[in].value;
            if (needs(in)) {
              Tensor& gi = grad_of(in);
              for (std::size_t r = 0; r < t.rows(); ++r)
                for (std::size_t c = 0; c < t.cols(); ++c) gi.at(r, c) += g.at(r, off + c);
            }
            off += t.cols();
          }
          break;
        }
        case Op::GatherRows:
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < n.indices.size(); ++i)
              for (std::size_t c = 0; c < g.cols(); ++c)
                gi.at(n.indices[i], c) += g.at(i, c);
          }
          break;
        case Op::Relu: {
          const Tensor& x = nodes_[n.inputs[0]].value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
              if (x.data[i] > 0) gi.data[i] += g.data[i];
          }
          break;
        }
        case Op::LeakyRelu: {
          const Tensor& x = nodes_[n.inputs[0]].value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
              gi.data[i] += g.data[i] * (x.data[i] > 0 ? 1.0 : n.scalar);
          }
          break;
        }
        case Op::Elu: {
          const Tensor& x = nodes_[n.inputs[0]].value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
              gi.data[i] += g.data[i] * (x.data[i] > 0 ? 1.0 : std::exp(x.data[i]));
          }
          break;
        }
        case Op::Abs: {
          const Tensor& x = nodes_[n.inputs[0]].value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
              if (x.data[i] > 0)
                gi.data[i] += g.data[i];
              else if (x.data[i] < 0)
                gi.data[i] -= g.data[i];
            }
          }
          break;
        }
        case Op::Sqrt: {
          const Tensor& out = n.value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i)
              if (out.data[i] > 0) gi.data[i] += g.data[i] * 0.5 / out.data[i];
          }
          break;
        }
        case Op::RowSum:
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t r = 0; r < gi.rows(); ++r)
              for (std::size_t c = 0; c < gi.cols(); ++c) gi.at(r, c) += g.at(r, 0);
          }
          break;
        case Op::Sum:
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (double& v : gi.data) v += g.data[0];
          }
          break;
        case Op::Reshape:
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
          }
          break;
        case Op::SegmentSoftmax: {
          if (needs(n.inputs[0])) {
            // d logit_i = alpha_i * (g_i - sum_{j in seg} alpha_j g_j)
            const Tensor& alpha = n.value;
            std::vector<double> seg_dot(static_cast<std::size_t>(n.n_segments), 0.0);
            for (std::size_t i = 0; i < alpha.size(); ++i)
              seg_dot[n.indices[i]] += alpha.data[i] * g.data[i];
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < alpha.size(); ++i)
              gi.data[i] += alpha.data[i] * (g.data[i] - seg_dot[n.indices[i]]);
          }
          break;
        }
        case Op::WeightedSegmentSum: {
          const Tensor& w = nodes_[n.inputs[0]].value;
          const Tensor& v = nodes_[n.inputs[1]].value;
          if (needs(n.inputs[0])) {
            Tensor& gw = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < w.size(); ++i) {
              double dot = 0;
              for (std::size_t c = 0; c < v.cols(); ++c)
                dot += g.at(n.indices[i], c) * v.at(i, c);
              gw.data[i] += dot;
            }
          }
          if (needs(n.inputs[1])) {
            Tensor& gv = grad_of(n.inputs[1]);
            for (std::size_t i = 0; i < w.size(); ++i)
              for (std::size_t c = 0; c < v.cols(); ++c)
                gv.at(i, c) += w.data[i] * g.at(n.indices[i], c);
          }
          break;
        }
        case Op::L2NormalizeRows: {
          const Tensor& x = nodes_[n.inputs[0]].value;
          const Tensor& out = n.value;
          if (needs(n.inputs[0])) {
            Tensor& gi = grad_of(n.inputs[0]);
            for (std::size_t r = 0; r < x.rows(); ++r) {
              double sq = 0;
              for (std::size_t c = 0; c < x.cols(); ++c) sq += x.at(r, c) * x.at(r, c);
              const double norm = std::sqrt(sq);
              if (norm == 0) continue;  // zero rows stay zero, gradient vanishes
              double dot = 0;
              for (std::size_t c = 0; c < x.cols(); ++c) dot += out.at(r, c) * g.at(r, c);
              for (std::size_t c = 0; c < x.cols(); ++c)
                gi.at(r, c) += (g.at(r, c) - out.at(r, c) * dot) / norm;
            }
          }
          break;
        }
      }
      // Free upstream grads we will not revisit.
      if (id != loss) {
        grads[id] = Tensor();
        has_grad[id] = false;
      }
    }
  }

 private:
  enum class Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    AddScalar,
    Scale,
    ConcatCols,
    GatherRows,
    Relu,
    LeakyRelu,
    Elu,
    Abs,
    Sqrt,
    RowSum,
    Sum,
    Reshape,
    SegmentSoftmax,
    WeightedSegmentSum,
    L2NormalizeRows,
  };

  struct Node {
    Op op;
    std::vector<Id> inputs;
    double scalar = 0.0;
    std::vector<std::int32_t> indices;
    std::int32_t n_segments = 0;
    Tensor value;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  static const char* op_name(Op op) {
    switch (op) {
      case Op::Leaf: return "leaf";
      case Op::MatMul: return "matmul";
      case Op::Add: return "add";
      case Op::Sub: return "sub";
      case Op::Mul: return "mul";
      case Op::AddScalar: return "add_scalar";
      case Op::Scale: return "scale";
      case Op::ConcatCols: return "concat_cols";
      case Op::GatherRows: return "gather_rows";
      case Op::Relu: return "relu";
      case Op::LeakyRelu: return "leaky_relu";
      case Op::Elu: return "elu";
      case Op::Abs: return "abs";
      case Op::Sqrt: return "sqrt";
      case Op::RowSum: return "row_sum";
      case Op::Sum: return "sum";
      case Op::Reshape: return "reshape";
      case Op::SegmentSoftmax: return "segment_softmax";
      case Op::WeightedSegmentSum: return "weighted_segment_sum";
      case Op::L2NormalizeRows: return "l2_normalize_rows";
    }
    return "?";
  }

  bool needs(Id id) const { return nodes_[id].needs_grad; }

  Id push(Op op, std::vector<Id> inputs, Tensor value, bool needs_grad) {
    check_finite(value, op_name(op));
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id binary(Op op, Id x, Id y) {
    const Tensor& a = value(x);
    const Tensor& b = value(y);
    contract(a.same_shape(b), std::string(op_name(op)) + " shape mismatch: " + shape_string(a) +
                                  " vs " + shape_string(b));
    Tensor out = a;
    switch (op) {
      case Op::Add:
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
        break;
      case Op::Mul:
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
        break;
      default:
        contract(false, "not a binary op");
    }
    return push(op, {x, y}, std::move(out), needs(x) || needs(y));
  }

  Id pointwise(Op op, Id x, double slope) {
    Tensor out = value(x);
    switch (op) {
      case Op::Relu:
        for (double& v : out.data) v = v > 0 ? v : 0.0;
        break;
      case Op::LeakyRelu:
        for (double& v : out.data) v = v > 0 ? v : slope * v;
        break;
      case Op::Elu:
        for (double& v : out.data) v = v > 0 ? v : std::exp(v) - 1.0;
        break;
      case Op::Abs:
        for (double& v : out.data) v = std::fabs(v);
        break;
      case Op::Sqrt:
        for (double& v : out.data) {
          contract(v >= 0, "sqrt of negative value");
          v = std::sqrt(v);
        }
        break;
      default:
        contract(false, "not a pointwise op");
    }
    Id id = push(op, {x}, std::move(out), needs(x));
    nodes_[id].scalar = slope;
    return id;
  }

  static void check_finite(const Tensor& t, const std::string& where) {
    if (!t.all_finite()) throw NonFiniteValue("non-finite values in " + where);
  }

  static void accumulate(Tensor& dst, const Tensor& src, double factor) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += factor * src.data[i];
  }

  // dst += op(a) @ op(b) with optional transposes, cache-friendly loops.
  static void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& dst, bool trans_a,
                                bool trans_b) {
    const std::size_t n = trans_a ? a.cols() : a.rows();
    const std::size_t p = trans_a ? a.rows() : a.cols();
    const std::size_t q = trans_b ? b.rows() : b.cols();
    if (!trans_a && !trans_b) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < p; ++k) {
          const double aik = a.at(i, k);
          if (aik == 0) continue;
          for (std::size_t j = 0; j < q; ++j) dst.at(i, j) += aik * b.at(k, j);
        }
    } else if (!trans_a && trans_b) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) {
          double s = 0;
          for (std::size_t k = 0; k < p; ++k) s += a.at(i, k) * b.at(j, k);
          dst.at(i, j) += s;
        }
    } else if (trans_a && !trans_b) {
      for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < n; ++i) {
          const double aki = a.at(k, i);
          if (aki == 0) continue;
          for (std::size_t j = 0; j < q; ++j) dst.at(i, j) += aki * b.at(k, j);
        }
    } else {
      contract(false, "double-transposed matmul unused");
    }
  }

  std::vector<Node> nodes_;
  std::map<Parameter*, Id> param_ids_;
  std::vector<Parameter*> params_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t n_coords = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed(double tol) const { return max_rel_error <= tol; }
};

// Compares analytic gradients against central finite differences
// (f(t+eps) - f(t-eps)) / (2 eps), every coordinate of every parameter.
// The relative error uses a unit floor: |a - fd| / max(1, |a|, |fd|), so
// near-zero gradients are held to an absolute 'tol' instead of blowing up.
//
// grad_fn must populate every parameter's gradient at the current values
// (one forward+backward); value_fn must return the loss at the current
// values without touching gradients.
inline GradCheckReport gradient_check(std::span<Parameter* const> params,
                                      const std::function<void()>& grad_fn,
                                      const std::function<double()>& value_fn, double eps) {
  contract(eps > 0, "gradient_check requires eps > 0");
  grad_fn();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const double up = value_fn();
      p.value.data[i] = saved - eps;
      const double down = value_fn();
      p.value.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double a = analytic[pi].data[i];
      const double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      ++report.n_coords;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = fd;
      }
    }
  }
  return report;
}

}  // namespace raea::ad
