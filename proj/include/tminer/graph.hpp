#pragma once

// Define-by-run autodiff over 2-D row-major tensors. Values are computed
// eagerly at node creation; backward() walks the tape in reverse. Every op
// checks its output for non-finite entries and throws NonFiniteError, so a
// diverging run fails at the first bad op instead of producing NaN metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tminer/common.hpp"
#include "tminer/rng.hpp"
#include "tminer/tensor.hpp"

namespace tminer::nc {

using NodeId = int;

enum class Op {
  Input,
  Param,
  Add,
  Sub,
  Mul,
  Scale,        // a*x + b with constant a,b
  AddRowvec,
  MatMul,
  Transpose,
  Sigmoid,
  Tanh,
  Relu,
  SoftmaxRows,
  ConcatCols,
  SliceCols,
  SliceRows,
  RowSum,
  ColSum,
  SumAll,
  MeanAll,
  RowwiseDot,
  ScaleRows,
  MaskMix,
  Dropout,
  GatherRows,
  GruCell,
  LstmCell,
  AttentionSteps,
  Clip01,
  Entropy,
  DivBcast,
  SoftmaxCE,
  Square,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddRowvec: return "add_rowvec";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::SumAll: return "sum_all";
    case Op::MeanAll: return "mean_all";
    case Op::RowwiseDot: return "rowwise_dot";
    case Op::ScaleRows: return "scale_rows";
    case Op::MaskMix: return "mask_mix";
    case Op::Dropout: return "dropout";
    case Op::GatherRows: return "gather_rows";
    case Op::GruCell: return "gru_cell";
    case Op::LstmCell: return "lstm_cell";
    case Op::AttentionSteps: return "attention_steps";
    case Op::Clip01: return "clip01";
    case Op::Entropy: return "entropy";
    case Op::DivBcast: return "div_bcast";
    case Op::SoftmaxCE: return "softmax_ce";
    case Op::Square: return "square";
  }
  return "?";
}

template <class Real>
class Graph {
 public:
  struct Node {
    Op op;
    std::vector<NodeId> in;
    Tensor<Real> val;
    Tensor<Real> grad;
    // op-specific extras
    Real a = Real(1), b = Real(0);     // Scale coefficients, Dropout keep prob
    int c0 = 0, c1 = 0;                // SliceCols bounds
    std::vector<int> ids;              // GatherRows indices / SoftmaxCE targets
    std::vector<Tensor<Real>> aux;     // stored activations, masks, probs
  };

  const Tensor<Real>& value(NodeId id) const { return nodes_[id].val; }
  const Tensor<Real>& grad(NodeId id) const { return nodes_[id].grad; }
  Shape shape(NodeId id) const { return nodes_[id].val.shape; }
  size_t node_count() const { return nodes_.size(); }

  NodeId input(Tensor<Real> t) { return push(Op::Input, {}, std::move(t)); }

  // One node per distinct key; reusing a weight across timesteps accumulates
  // into a single gradient buffer.
  NodeId param(const std::string& key, const Tensor<Real>& value) {
    std::string full = param_ns_ + key;
    auto it = param_cache_.find(full);
    if (it != param_cache_.end()) return it->second;
    NodeId id = push(Op::Param, {}, value);
    param_cache_.emplace(std::move(full), id);
    return id;
  }

  // Namespace prefixed onto param keys; lets two networks with overlapping
  // parameter names share a graph (e.g. a frozen classifier inside a
  // generator training step — its grads land under the prefix and are never
  // applied).
  std::string set_param_namespace(std::string ns) {
    std::swap(ns, param_ns_);
    return ns;
  }

  template <class Fn>  // fn(const std::string& key, const Tensor<Real>& grad)
  void for_each_param_grad(Fn&& fn) const {
    for (const auto& [key, id] : param_cache_) fn(key, nodes_[id].grad);
  }

  NodeId add(NodeId x, NodeId y) {
    check_same(x, y, "add");
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat() + val(y).mat();
    return push(Op::Add, {x, y}, std::move(out));
  }

  NodeId sub(NodeId x, NodeId y) {
    check_same(x, y, "sub");
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat() - val(y).mat();
    return push(Op::Sub, {x, y}, std::move(out));
  }

  NodeId mul(NodeId x, NodeId y) {
    check_same(x, y, "mul");
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().cwiseProduct(val(y).mat());
    return push(Op::Mul, {x, y}, std::move(out));
  }

  // a*x + b elementwise, constants
  NodeId scale(NodeId x, Real a, Real b = Real(0)) {
    Tensor<Real> out(shape(x));
    out.mat() = (val(x).mat().array() * a + b).matrix();
    NodeId id = push(Op::Scale, {x}, std::move(out));
    nodes_[id].a = a;
    nodes_[id].b = b;
    return id;
  }

  NodeId add_rowvec(NodeId x, NodeId v) {
    if (shape(v).rows != 1 || shape(v).cols != shape(x).cols)
      throw ShapeError(std::string("add_rowvec: ") + shape(x).str() + " vs " + shape(v).str());
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().rowwise() + val(v).mat().row(0);
    return push(Op::AddRowvec, {x, v}, std::move(out));
  }

  NodeId matmul(NodeId x, NodeId y) {
    if (shape(x).cols != shape(y).rows)
      throw ShapeError(std::string("matmul: ") + shape(x).str() + " * " + shape(y).str());
    Tensor<Real> out(Shape{shape(x).rows, shape(y).cols});
    out.mat() = val(x).mat() * val(y).mat();
    return push(Op::MatMul, {x, y}, std::move(out));
  }

  NodeId transpose(NodeId x) {
    Tensor<Real> out(Shape{shape(x).cols, shape(x).rows});
    out.mat() = val(x).mat().transpose();
    return push(Op::Transpose, {x}, std::move(out));
  }

  NodeId sigmoid(NodeId x) {
    Tensor<Real> out(shape(x));
    out.mat() = (Real(1) / (Real(1) + (-val(x).mat().array()).exp())).matrix();
    return push(Op::Sigmoid, {x}, std::move(out));
  }

  NodeId tanh(NodeId x) {
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().array().tanh().matrix();
    return push(Op::Tanh, {x}, std::move(out));
  }

  NodeId relu(NodeId x) {
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().cwiseMax(Real(0));
    return push(Op::Relu, {x}, std::move(out));
  }

  NodeId softmax_rows(NodeId x) {
    Tensor<Real> out(shape(x));
    const auto& xv = val(x);
    for (int i = 0; i < xv.rows(); ++i) {
      Real mx = xv.at(i, 0);
      for (int j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j));
      Real sum = 0;
      for (int j = 0; j < xv.cols(); ++j) {
        Real e = std::exp(xv.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < xv.cols(); ++j) out.at(i, j) /= sum;
    }
    return push(Op::SoftmaxRows, {x}, std::move(out));
  }

  NodeId concat_cols(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: no inputs");
    int rows = shape(xs[0]).rows, cols = 0;
    for (NodeId x : xs) {
      if (shape(x).rows != rows) throw ShapeError("concat_cols: row mismatch");
      cols += shape(x).cols;
    }
    Tensor<Real> out(Shape{rows, cols});
    int off = 0;
    for (NodeId x : xs) {
      out.mat().middleCols(off, shape(x).cols) = val(x).mat();
      off += shape(x).cols;
    }
    return push(Op::ConcatCols, xs, std::move(out));
  }

  NodeId slice_cols(NodeId x, int c0, int c1) {
    if (c0 < 0 || c1 <= c0 || c1 > shape(x).cols)
      throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," +
                       std::to_string(c1) + ") of " + shape(x).str());
    Tensor<Real> out(Shape{shape(x).rows, c1 - c0});
    out.mat() = val(x).mat().middleCols(c0, c1 - c0);
    NodeId id = push(Op::SliceCols, {x}, std::move(out));
    nodes_[id].c0 = c0;
    nodes_[id].c1 = c1;
    return id;
  }

  NodeId slice_rows(NodeId x, int r0, int r1) {
    if (r0 < 0 || r1 <= r0 || r1 > shape(x).rows)
      throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," +
                       std::to_string(r1) + ") of " + shape(x).str());
    Tensor<Real> out(Shape{r1 - r0, shape(x).cols});
    out.mat() = val(x).mat().middleRows(r0, r1 - r0);
    NodeId id = push(Op::SliceRows, {x}, std::move(out));
    nodes_[id].c0 = r0;
    nodes_[id].c1 = r1;
    return id;
  }

  NodeId row_sum(NodeId x) {
    Tensor<Real> out(Shape{shape(x).rows, 1});
    out.mat() = val(x).mat().rowwise().sum();
    return push(Op::RowSum, {x}, std::move(out));
  }

  NodeId col_sum(NodeId x) {
    Tensor<Real> out(Shape{1, shape(x).cols});
    out.mat() = val(x).mat().colwise().sum();
    return push(Op::ColSum, {x}, std::move(out));
  }

  NodeId sum_all(NodeId x) {
    Tensor<Real> out(Shape{1, 1});
    out.data[0] = val(x).mat().sum();
    return push(Op::SumAll, {x}, std::move(out));
  }

  NodeId mean_all(NodeId x) {
    Tensor<Real> out(Shape{1, 1});
    out.data[0] = val(x).mat().sum() / Real(shape(x).size());
    return push(Op::MeanAll, {x}, std::move(out));
  }

  NodeId rowwise_dot(NodeId x, NodeId y) {
    check_same(x, y, "rowwise_dot");
    Tensor<Real> out(Shape{shape(x).rows, 1});
    out.mat() = val(x).mat().cwiseProduct(val(y).mat()).rowwise().sum();
    return push(Op::RowwiseDot, {x, y}, std::move(out));
  }

  // out[i,:] = x[i,:] * s[i,0]
  NodeId scale_rows(NodeId x, NodeId s) {
    if (shape(s).rows != shape(x).rows || shape(s).cols != 1)
      throw ShapeError(std::string("scale_rows: ") + shape(x).str() + " by " + shape(s).str());
    Tensor<Real> out(shape(x));
    out.mat() =
        (val(x).mat().array().colwise() * val(s).mat().col(0).array()).matrix();
    return push(Op::ScaleRows, {x, s}, std::move(out));
  }

  // out = m*a + (1-m)*b with a constant per-row mask m [n,1]; used to hold
  // recurrent state across padding steps.
  NodeId mask_mix(NodeId a, NodeId b, const Tensor<Real>& mask) {
    check_same(a, b, "mask_mix");
    if (mask.rows() != shape(a).rows || mask.cols() != 1)
      throw ShapeError("mask_mix: mask " + mask.shape.str() + " vs " + shape(a).str());
    Tensor<Real> out(shape(a));
    for (int i = 0; i < out.rows(); ++i) {
      Real m = mask.at(i, 0);
      for (int j = 0; j < out.cols(); ++j)
        out.at(i, j) = m * val(a).at(i, j) + (Real(1) - m) * val(b).at(i, j);
    }
    NodeId id = push(Op::MaskMix, {a, b}, std::move(out));
    nodes_[id].aux.push_back(mask);
    return id;
  }

  // Inverted dropout; sampling happens here so the caller controls the stream.
  NodeId dropout(NodeId x, Real keep, Rng& rng) {
    if (!(keep > Real(0) && keep <= Real(1))) throw ShapeError("dropout: keep out of range");
    Tensor<Real> mask(shape(x));
    for (auto& m : mask.data) m = rng.bernoulli(static_cast<double>(keep)) ? Real(1) : Real(0);
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().cwiseProduct(mask.mat()) * (Real(1) / keep);
    NodeId id = push(Op::Dropout, {x}, std::move(out));
    nodes_[id].a = keep;
    nodes_[id].aux.push_back(std::move(mask));
    return id;
  }

  NodeId gather_rows(NodeId table, const std::vector<int>& ids) {
    const auto& tv = val(table);
    for (int i : ids)
      if (i < 0 || i >= tv.rows())
        throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " +
                         std::to_string(tv.rows()));
    Tensor<Real> out(Shape{static_cast<int>(ids.size()), tv.cols()});
    for (size_t r = 0; r < ids.size(); ++r)
      out.mat().row(static_cast<int>(r)) = tv.mat().row(ids[r]);
    NodeId id = push(Op::GatherRows, {table}, std::move(out));
    nodes_[id].ids = ids;
    return id;
  }

  // z = sig(x Wz + h Uz + bz); r = sig(x Wr + h Ur + br)
  // hc = tanh(x Wh + (r*h) Uh + bh); out = z*h + (1-z)*hc
  NodeId gru_cell(NodeId x, NodeId h, NodeId Wz, NodeId Uz, NodeId bz, NodeId Wr,
                  NodeId Ur, NodeId br, NodeId Wh, NodeId Uh, NodeId bh) {
    int B = shape(x).rows, H = shape(h).cols;
    if (shape(h).rows != B) throw ShapeError("gru_cell: batch mismatch");
    if (shape(Wz).rows != shape(x).cols || shape(Wz).cols != H ||
        shape(Uz).rows != H || shape(Uz).cols != H || shape(bz).cols != H)
      throw ShapeError("gru_cell: z gate shapes");
    auto gate = [&](NodeId W, NodeId U, NodeId bias, bool use_rh,
                    const EigenMat<Real>* rh) {
      EigenMat<Real> pre = val(x).mat() * val(W).mat();
      if (use_rh)
        pre += (*rh) * val(U).mat();
      else
        pre += val(h).mat() * val(U).mat();
      pre.rowwise() += val(bias).mat().row(0);
      return pre;
    };
    Tensor<Real> z(Shape{B, H}), r(Shape{B, H}), hc(Shape{B, H}), out(Shape{B, H});
    z.mat() = (Real(1) / (Real(1) + (-gate(Wz, Uz, bz, false, nullptr).array()).exp())).matrix();
    r.mat() = (Real(1) / (Real(1) + (-gate(Wr, Ur, br, false, nullptr).array()).exp())).matrix();
    EigenMat<Real> rh = r.mat().cwiseProduct(val(h).mat());
    hc.mat() = gate(Wh, Uh, bh, true, &rh).array().tanh().matrix();
    out.mat() = z.mat().cwiseProduct(val(h).mat()) +
                (EigenMat<Real>::Ones(B, H) - z.mat()).cwiseProduct(hc.mat());
    NodeId id = push(Op::GruCell, {x, h, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh}, std::move(out));
    nodes_[id].aux = {std::move(z), std::move(r), std::move(hc)};
    return id;
  }

  // Gate order i,f,g,o in the fused weight. Output is [h c] concatenated;
  // slice_cols(0,H) / (H,2H) recovers the two streams.
  NodeId lstm_cell(NodeId x, NodeId h, NodeId c, NodeId Wx, NodeId Wh, NodeId bias) {
    int B = shape(x).rows, H = shape(h).cols;
    if (shape(c).cols != H || shape(c).rows != B || shape(h).rows != B)
      throw ShapeError("lstm_cell: state shapes");
    if (shape(Wx).rows != shape(x).cols || shape(Wx).cols != 4 * H ||
        shape(Wh).rows != H || shape(Wh).cols != 4 * H || shape(bias).cols != 4 * H)
      throw ShapeError("lstm_cell: weight shapes");
    EigenMat<Real> pre = val(x).mat() * val(Wx).mat() + val(h).mat() * val(Wh).mat();
    pre.rowwise() += val(bias).mat().row(0);
    Tensor<Real> gi(Shape{B, H}), gf(Shape{B, H}), gg(Shape{B, H}), go(Shape{B, H}),
        cn(Shape{B, H});
    gi.mat() = (Real(1) / (Real(1) + (-pre.middleCols(0, H).array()).exp())).matrix();
    gf.mat() = (Real(1) / (Real(1) + (-pre.middleCols(H, H).array()).exp())).matrix();
    gg.mat() = pre.middleCols(2 * H, H).array().tanh().matrix();
    go.mat() = (Real(1) / (Real(1) + (-pre.middleCols(3 * H, H).array()).exp())).matrix();
    cn.mat() = gf.mat().cwiseProduct(val(c).mat()) + gi.mat().cwiseProduct(gg.mat());
    Tensor<Real> out(Shape{B, 2 * H});
    out.mat().middleCols(0, H) = go.mat().cwiseProduct(cn.mat().array().tanh().matrix());
    out.mat().middleCols(H, H) = cn.mat();
    NodeId id = push(Op::LstmCell, {x, h, c, Wx, Wh, bias}, std::move(out));
    nodes_[id].aux = {std::move(gi), std::move(gf), std::move(gg), std::move(go), std::move(cn)};
    return id;
  }

  // Dot-product attention of a query [B,H] over T step states [B,H] each,
  // scaled by 1/sqrt(H). mask [B,T]: 1 = attend, 0 = padded step.
  NodeId attention_steps(NodeId query, const std::vector<NodeId>& steps,
                         const Tensor<Real>& mask) {
    int B = shape(query).rows, H = shape(query).cols;
    int T = static_cast<int>(steps.size());
    if (T == 0) throw ShapeError("attention_steps: no steps");
    for (NodeId s : steps)
      if (!(shape(s) == Shape{B, H})) throw ShapeError("attention_steps: step shape");
    if (mask.rows() != B || mask.cols() != T)
      throw ShapeError("attention_steps: mask " + mask.shape.str());
    Real inv_scale = Real(1) / std::sqrt(Real(H));
    Tensor<Real> att(Shape{B, T});
    for (int b = 0; b < B; ++b) {
      Real mx = -std::numeric_limits<Real>::infinity();
      std::vector<Real> sc(T);
      for (int t = 0; t < T; ++t) {
        if (mask.at(b, t) > Real(0)) {
          Real dot = 0;
          for (int j = 0; j < H; ++j) dot += val(query).at(b, j) * val(steps[t]).at(b, j);
          sc[t] = dot * inv_scale;
          mx = std::max(mx, sc[t]);
        } else {
          sc[t] = 0;  // excluded below
        }
      }
      Real sum = 0;
      for (int t = 0; t < T; ++t) {
        if (mask.at(b, t) > Real(0)) {
          att.at(b, t) = std::exp(sc[t] - mx);
          sum += att.at(b, t);
        } else {
          att.at(b, t) = 0;
        }
      }
      if (sum <= Real(0)) throw ShapeError("attention_steps: fully masked row");
      for (int t = 0; t < T; ++t) att.at(b, t) /= sum;
    }
    Tensor<Real> out(Shape{B, H});
    out.mat().setZero();
    for (int t = 0; t < T; ++t)
      out.mat() +=
          (val(steps[t]).mat().array().colwise() * att.mat().col(t).array()).matrix();
    std::vector<NodeId> in;
    in.reserve(steps.size() + 1);
    in.push_back(query);
    for (NodeId s : steps) in.push_back(s);
    NodeId id = push(Op::AttentionSteps, in, std::move(out));
    nodes_[id].aux = {std::move(att), mask};
    return id;
  }

  NodeId clip01(NodeId x) {
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().cwiseMax(Real(0)).cwiseMin(Real(1));
    return push(Op::Clip01, {x}, std::move(out));
  }

  // Shannon entropy -sum p ln p over entries with p > 0; zero entries
  // contribute nothing and get zero gradient.
  NodeId entropy(NodeId p) {
    Real h = 0;
    for (Real v : val(p).data) {
      if (v < Real(0)) {
        if (v < Real(-1e-9)) throw ShapeError("entropy: negative mass");
        continue;
      }
      if (v > Real(0)) h -= v * std::log(v);
    }
    Tensor<Real> out(Shape{1, 1});
    out.data[0] = h;
    return push(Op::Entropy, {p}, std::move(out));
  }

  // out = x / s with scalar node s [1,1]
  NodeId div_bcast(NodeId x, NodeId s) {
    if (!(shape(s) == Shape{1, 1})) throw ShapeError("div_bcast: divisor not scalar");
    Real sv = val(s).data[0];
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat() * (Real(1) / sv);
    return push(Op::DivBcast, {x, s}, std::move(out));
  }

  // Mean cross-entropy of row-wise softmax(logits) against integer targets.
  NodeId softmax_ce(NodeId logits, const std::vector<int>& targets) {
    const auto& lv = val(logits);
    if (static_cast<int>(targets.size()) != lv.rows())
      throw ShapeError("softmax_ce: target count " + std::to_string(targets.size()) +
                       " vs rows " + std::to_string(lv.rows()));
    Tensor<Real> probs(lv.shape);
    Real loss = 0;
    for (int i = 0; i < lv.rows(); ++i) {
      int t = targets[i];
      if (t < 0 || t >= lv.cols()) throw ShapeError("softmax_ce: target out of range");
      Real mx = lv.at(i, 0);
      for (int j = 1; j < lv.cols(); ++j) mx = std::max(mx, lv.at(i, j));
      Real sum = 0;
      for (int j = 0; j < lv.cols(); ++j) {
        probs.at(i, j) = std::exp(lv.at(i, j) - mx);
        sum += probs.at(i, j);
      }
      for (int j = 0; j < lv.cols(); ++j) probs.at(i, j) /= sum;
      loss -= std::log(std::max(probs.at(i, t), Real(1e-30)));
    }
    Tensor<Real> out(Shape{1, 1});
    out.data[0] = loss / Real(lv.rows());
    NodeId id = push(Op::SoftmaxCE, {logits}, std::move(out));
    nodes_[id].ids = targets;
    nodes_[id].aux.push_back(std::move(probs));
    return id;
  }

  NodeId square(NodeId x) {
    Tensor<Real> out(shape(x));
    out.mat() = val(x).mat().cwiseProduct(val(x).mat());
    return push(Op::Square, {x}, std::move(out));
  }

  void backward(NodeId loss) {
    if (ran_backward_) throw Error("backward() already ran on this graph");
    ran_backward_ = true;
    if (!(shape(loss) == Shape{1, 1}))
      throw ShapeError("backward: loss must be scalar, got " + shape(loss).str());
    nodes_[loss].grad.data[0] = Real(1);
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id)
      backward_node(id);
  }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> param_cache_;
  std::string param_ns_;
  bool ran_backward_ = false;

  const Tensor<Real>& val(NodeId id) const { return nodes_[id].val; }
  Tensor<Real>& gref(NodeId id) { return nodes_[id].grad; }

  void check_same(NodeId x, NodeId y, const char* what) const {
    if (!(shape(x) == shape(y)))
      throw ShapeError(std::string(what) + ": " + shape(x).str() + " vs " + shape(y).str());
  }

  NodeId push(Op op, std::vector<NodeId> in, Tensor<Real> out) {
    if (!out.all_finite())
      throw NonFiniteError(std::string("non-finite output of ") + op_name(op));
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.grad = Tensor<Real>(out.shape);
    n.val = std::move(out);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void backward_node(NodeId id) {
    Node& n = nodes_[id];
    const Tensor<Real>& g = n.grad;
    bool any = false;
    for (Real v : g.data)
      if (v != Real(0)) {
        any = true;
        break;
      }
    if (!any) return;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::Add:
        gref(n.in[0]).mat() += g.mat();
        gref(n.in[1]).mat() += g.mat();
        break;
      case Op::Sub:
        gref(n.in[0]).mat() += g.mat();
        gref(n.in[1]).mat() -= g.mat();
        break;
      case Op::Mul:
        gref(n.in[0]).mat() += g.mat().cwiseProduct(val(n.in[1]).mat());
        gref(n.in[1]).mat() += g.mat().cwiseProduct(val(n.in[0]).mat());
        break;
      case Op::Scale:
        gref(n.in[0]).mat() += g.mat() * n.a;
        break;
      case Op::AddRowvec:
        gref(n.in[0]).mat() += g.mat();
        gref(n.in[1]).mat() += g.mat().colwise().sum();
        break;
      case Op::MatMul:
        gref(n.in[0]).mat() += g.mat() * val(n.in[1]).mat().transpose();
        gref(n.in[1]).mat() += val(n.in[0]).mat().transpose() * g.mat();
        break;
      case Op::Transpose:
        gref(n.in[0]).mat() += g.mat().transpose();
        break;
      case Op::Sigmoid: {
        const auto& y = n.val.mat();
        gref(n.in[0]).mat() +=
            g.mat().cwiseProduct(y.cwiseProduct((y.array() * Real(-1) + Real(1)).matrix()));
        break;
      }
      case Op::Tanh: {
        const auto& y = n.val.mat();
        gref(n.in[0]).mat() +=
            g.mat().cwiseProduct((Real(1) - y.array().square()).matrix());
        break;
      }
      case Op::Relu: {
        auto& dst = gref(n.in[0]);
        const auto& xv = val(n.in[0]);
        for (int i = 0; i < xv.size(); ++i)
          if (xv.data[i] > Real(0)) dst.data[i] += g.data[i];
        break;
      }
      case Op::SoftmaxRows: {
        const auto& y = n.val;
        auto& dst = gref(n.in[0]);
        for (int i = 0; i < y.rows(); ++i) {
          Real s = 0;
          for (int j = 0; j < y.cols(); ++j) s += g.at(i, j) * y.at(i, j);
          for (int j = 0; j < y.cols(); ++j)
            dst.at(i, j) += y.at(i, j) * (g.at(i, j) - s);
        }
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (NodeId x : n.in) {
          int w = shape(x).cols;
          gref(x).mat() += g.mat().middleCols(off, w);
          off += w;
        }
        break;
      }
      case Op::SliceCols:
        gref(n.in[0]).mat().middleCols(n.c0, n.c1 - n.c0) += g.mat();
        break;
      case Op::SliceRows:
        gref(n.in[0]).mat().middleRows(n.c0, n.c1 - n.c0) += g.mat();
        break;
      case Op::RowSum: {
        auto& dst = gref(n.in[0]);
        dst.mat() += g.mat().col(0).replicate(1, dst.cols());
        break;
      }
      case Op::ColSum: {
        auto& dst = gref(n.in[0]);
        dst.mat() += g.mat().row(0).replicate(dst.rows(), 1);
        break;
      }
      case Op::SumAll:
        gref(n.in[0]).mat().array() += g.data[0];
        break;
      case Op::MeanAll:
        gref(n.in[0]).mat().array() += g.data[0] / Real(shape(n.in[0]).size());
        break;
      case Op::RowwiseDot: {
        const auto& a = val(n.in[0]);
        const auto& b = val(n.in[1]);
        auto& da = gref(n.in[0]);
        auto& db = gref(n.in[1]);
        for (int i = 0; i < a.rows(); ++i) {
          Real gi = g.at(i, 0);
          for (int j = 0; j < a.cols(); ++j) {
            da.at(i, j) += gi * b.at(i, j);
            db.at(i, j) += gi * a.at(i, j);
          }
        }
        break;
      }
      case Op::ScaleRows: {
        const auto& x = val(n.in[0]);
        const auto& s = val(n.in[1]);
        auto& dx = gref(n.in[0]);
        auto& ds = gref(n.in[1]);
        for (int i = 0; i < x.rows(); ++i) {
          Real si = s.at(i, 0), acc = 0;
          for (int j = 0; j < x.cols(); ++j) {
            dx.at(i, j) += g.at(i, j) * si;
            acc += g.at(i, j) * x.at(i, j);
          }
          ds.at(i, 0) += acc;
        }
        break;
      }
      case Op::MaskMix: {
        const auto& m = n.aux[0];
        auto& da = gref(n.in[0]);
        auto& db = gref(n.in[1]);
        for (int i = 0; i < g.rows(); ++i) {
          Real mi = m.at(i, 0);
          for (int j = 0; j < g.cols(); ++j) {
            da.at(i, j) += g.at(i, j) * mi;
            db.at(i, j) += g.at(i, j) * (Real(1) - mi);
          }
        }
        break;
      }
      case Op::Dropout:
        gref(n.in[0]).mat() += g.mat().cwiseProduct(n.aux[0].mat()) * (Real(1) / n.a);
        break;
      case Op::GatherRows: {
        auto& dt = gref(n.in[0]);
        for (size_t r = 0; r < n.ids.size(); ++r)
          dt.mat().row(n.ids[r]) += g.mat().row(static_cast<int>(r));
        break;
      }
      case Op::GruCell:
        backward_gru(n);
        break;
      case Op::LstmCell:
        backward_lstm(n);
        break;
      case Op::AttentionSteps:
        backward_attention(n);
        break;
      case Op::Clip01: {
        const auto& xv = val(n.in[0]);
        auto& dst = gref(n.in[0]);
        for (int i = 0; i < xv.size(); ++i)
          if (xv.data[i] > Real(0) && xv.data[i] < Real(1)) dst.data[i] += g.data[i];
        break;
      }
      case Op::Entropy: {
        const auto& p = val(n.in[0]);
        auto& dst = gref(n.in[0]);
        Real gs = g.data[0];
        for (int i = 0; i < p.size(); ++i)
          if (p.data[i] > Real(0))
            dst.data[i] += gs * (-(std::log(p.data[i]) + Real(1)));
        break;
      }
      case Op::DivBcast: {
        Real sv = val(n.in[1]).data[0];
        gref(n.in[0]).mat() += g.mat() * (Real(1) / sv);
        Real acc = 0;
        const auto& y = n.val;
        for (int i = 0; i < y.size(); ++i) acc += g.data[i] * y.data[i];
        gref(n.in[1]).data[0] += -acc / sv;
        break;
      }
      case Op::SoftmaxCE: {
        const auto& probs = n.aux[0];
        auto& dst = gref(n.in[0]);
        Real gs = g.data[0] / Real(probs.rows());
        for (int i = 0; i < probs.rows(); ++i)
          for (int j = 0; j < probs.cols(); ++j) {
            Real d = probs.at(i, j) - (j == n.ids[i] ? Real(1) : Real(0));
            dst.at(i, j) += gs * d;
          }
        break;
      }
      case Op::Square:
        gref(n.in[0]).mat() +=
            g.mat().cwiseProduct(val(n.in[0]).mat()) * Real(2);
        break;
    }
  }

  void backward_gru(Node& n) {
    const auto& g = n.grad;
    NodeId x = n.in[0], h = n.in[1];
    NodeId Wz = n.in[2], Uz = n.in[3], bz = n.in[4];
    NodeId Wr = n.in[5], Ur = n.in[6], br = n.in[7];
    NodeId Wh = n.in[8], Uh = n.in[9], bh = n.in[10];
    const auto& z = n.aux[0].mat();
    const auto& r = n.aux[1].mat();
    const auto& hc = n.aux[2].mat();
    const auto& hv = val(h).mat();
    const auto& xv = val(x).mat();
    int B = g.rows(), H = g.cols();

    EigenMat<Real> dz = g.mat().cwiseProduct(hv - hc);
    EigenMat<Real> dhc = g.mat().cwiseProduct((Real(1) - z.array()).matrix());
    gref(h).mat() += g.mat().cwiseProduct(z);

    EigenMat<Real> dah = dhc.cwiseProduct((Real(1) - hc.array().square()).matrix());
    gref(x).mat() += dah * val(Wh).mat().transpose();
    EigenMat<Real> drh = dah * val(Uh).mat().transpose();
    EigenMat<Real> rh = r.cwiseProduct(hv);
    gref(Wh).mat() += xv.transpose() * dah;
    gref(Uh).mat() += rh.transpose() * dah;
    gref(bh).mat() += dah.colwise().sum();

    EigenMat<Real> dr = drh.cwiseProduct(hv);
    gref(h).mat() += drh.cwiseProduct(r);

    EigenMat<Real> daz =
        dz.cwiseProduct(z.cwiseProduct((Real(1) - z.array()).matrix()));
    EigenMat<Real> dar =
        dr.cwiseProduct(r.cwiseProduct((Real(1) - r.array()).matrix()));
    gref(x).mat() += daz * val(Wz).mat().transpose() + dar * val(Wr).mat().transpose();
    gref(h).mat() += daz * val(Uz).mat().transpose() + dar * val(Ur).mat().transpose();
    gref(Wz).mat() += xv.transpose() * daz;
    gref(Uz).mat() += hv.transpose() * daz;
    gref(bz).mat() += daz.colwise().sum();
    gref(Wr).mat() += xv.transpose() * dar;
    gref(Ur).mat() += hv.transpose() * dar;
    gref(br).mat() += dar.colwise().sum();
    (void)B;
    (void)H;
  }

  void backward_lstm(Node& n) {
    NodeId x = n.in[0], h = n.in[1], c = n.in[2];
    NodeId Wx = n.in[3], Wh = n.in[4], bias = n.in[5];
    const auto& gi = n.aux[0].mat();
    const auto& gf = n.aux[1].mat();
    const auto& gg = n.aux[2].mat();
    const auto& go = n.aux[3].mat();
    const auto& cn = n.aux[4].mat();
    int B = shape(x).rows, H = shape(h).cols;
    EigenMat<Real> dh = n.grad.mat().middleCols(0, H);
    EigenMat<Real> dc = n.grad.mat().middleCols(H, H);
    EigenMat<Real> tc = cn.array().tanh().matrix();

    EigenMat<Real> dgo = dh.cwiseProduct(tc);
    dc += dh.cwiseProduct(go).cwiseProduct((Real(1) - tc.array().square()).matrix());
    EigenMat<Real> dgf = dc.cwiseProduct(val(c).mat());
    gref(c).mat() += dc.cwiseProduct(gf);
    EigenMat<Real> dgi = dc.cwiseProduct(gg);
    EigenMat<Real> dgg = dc.cwiseProduct(gi);

    EigenMat<Real> dpre(B, 4 * H);
    dpre.middleCols(0, H) =
        dgi.cwiseProduct(gi.cwiseProduct((Real(1) - gi.array()).matrix()));
    dpre.middleCols(H, H) =
        dgf.cwiseProduct(gf.cwiseProduct((Real(1) - gf.array()).matrix()));
    dpre.middleCols(2 * H, H) = dgg.cwiseProduct((Real(1) - gg.array().square()).matrix());
    dpre.middleCols(3 * H, H) =
        dgo.cwiseProduct(go.cwiseProduct((Real(1) - go.array()).matrix()));

    gref(x).mat() += dpre * val(Wx).mat().transpose();
    gref(h).mat() += dpre * val(Wh).mat().transpose();
    gref(Wx).mat() += val(x).mat().transpose() * dpre;
    gref(Wh).mat() += val(h).mat().transpose() * dpre;
    gref(bias).mat() += dpre.colwise().sum();
  }

  void backward_attention(Node& n) {
    NodeId query = n.in[0];
    int T = static_cast<int>(n.in.size()) - 1;
    const auto& att = n.aux[0];
    const auto& mask = n.aux[1];
    int B = shape(query).rows, H = shape(query).cols;
    Real inv_scale = Real(1) / std::sqrt(Real(H));
    const auto& g = n.grad;

    for (int b = 0; b < B; ++b) {
      // value-side gradient and d(att)
      std::vector<Real> da(T, Real(0));
      for (int t = 0; t < T; ++t) {
        if (mask.at(b, t) <= Real(0)) continue;
        NodeId k = n.in[1 + t];
        Real dot = 0;
        for (int j = 0; j < H; ++j) {
          gref(k).at(b, j) += att.at(b, t) * g.at(b, j);
          dot += g.at(b, j) * val(k).at(b, j);
        }
        da[t] = dot;
      }
      // softmax backward
      Real s = 0;
      for (int t = 0; t < T; ++t) s += att.at(b, t) * da[t];
      for (int t = 0; t < T; ++t) {
        if (mask.at(b, t) <= Real(0)) continue;
        Real dscore = att.at(b, t) * (da[t] - s);
        NodeId k = n.in[1 + t];
        for (int j = 0; j < H; ++j) {
          gref(query).at(b, j) += dscore * val(k).at(b, j) * inv_scale;
          gref(k).at(b, j) += dscore * val(query).at(b, j) * inv_scale;
        }
      }
    }
  }
};

}  // namespace tminer::nc
