#include "aptkit/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "aptkit/flops.hpp"
#include "aptkit/numkit.hpp"

namespace aptkit {

namespace {

// Raw (uncounted) helpers for the backward sweep.
Matrix raw_matmul_nt(const Matrix& a, const Matrix& bt) {
  // a * bt^T without transposing bt first.
  Matrix c(a.rows, bt.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < bt.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * bt(j, k);
      c(i, j) = s;
    }
  return c;
}

Matrix raw_matmul_tn(const Matrix& at, const Matrix& b) {
  // at^T * b.
  Matrix c(at.cols, b.cols);
  for (std::size_t k = 0; k < at.rows; ++k)
    for (std::size_t i = 0; i < at.cols; ++i) {
      const double v = at(k, i);
      if (v == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += v * b(k, j);
    }
  return c;
}

}  // namespace

Value Tape::push(Matrix val, bool needs_grad, std::function<void(Tape&, std::size_t)> vjp) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Value{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Value v) const {
  if (v.idx >= nodes_.size()) throw std::out_of_range("Tape: stale or foreign value handle");
  return nodes_[v.idx];
}

Value Tape::leaf(Matrix m, std::string name) {
  Value v = push(std::move(m), true, nullptr);
  nodes_[v.idx].name = std::move(name);
  return v;
}

Value Tape::constant(Matrix m) { return push(std::move(m), false, nullptr); }

const Matrix& Tape::value(Value v) const { return node(v).val; }

Matrix Tape::grad(Value v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return zeros(n.val.rows, n.val.cols);
  return n.grad;
}

void Tape::accumulate(std::size_t idx, const Matrix& g) {
  Node& n = nodes_[idx];
  if (!n.needs_grad) return;
  if (!same_shape(g, n.val))
    throw std::logic_error("Tape: gradient shape " + g.shape() + " for value " + n.val.shape());
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

Value Tape::matmul(Value a, Value b) {
  const Matrix out = aptkit::matmul(node(a).val, node(b).val);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  const std::size_t ai = a.idx, bi = b.idx;
  return push(out, ng, [ai, bi](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, raw_matmul_nt(g, t.nodes_[bi].val));
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, raw_matmul_tn(t.nodes_[ai].val, g));
  });
}

Value Tape::add(Value a, Value b) {
  const Matrix out = aptkit::add(node(a).val, node(b).val);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  const std::size_t ai = a.idx, bi = b.idx;
  return push(out, ng, [ai, bi](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Value Tape::sub(Value a, Value b) {
  const Matrix out = aptkit::sub(node(a).val, node(b).val);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  const std::size_t ai = a.idx, bi = b.idx;
  return push(out, ng, [ai, bi](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    t.accumulate(ai, g);
    if (t.nodes_[bi].needs_grad) {
      Matrix neg(g.rows, g.cols);
      for (std::size_t i = 0; i < g.data.size(); ++i) neg.data[i] = -g.data[i];
      t.accumulate(bi, neg);
    }
  });
}

Value Tape::hadamard(Value a, Value b) {
  const Matrix out = aptkit::hadamard(node(a).val, node(b).val);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  const std::size_t ai = a.idx, bi = b.idx;
  return push(out, ng, [ai, bi](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.nodes_[ai].val;
    const Matrix& bv = t.nodes_[bi].val;
    if (t.nodes_[ai].needs_grad) {
      Matrix ga(g.rows, g.cols);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] = g.data[i] * bv.data[i];
      t.accumulate(ai, ga);
    }
    if (t.nodes_[bi].needs_grad) {
      Matrix gb(g.rows, g.cols);
      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] = g.data[i] * av.data[i];
      t.accumulate(bi, gb);
    }
  });
}

Value Tape::scale(Value a, double c) {
  const Matrix out = aptkit::scale(node(a).val, c);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai, c](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix ga(g.rows, g.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] = g.data[i] * c;
    t.accumulate(ai, ga);
  });
}

Value Tape::scale_by(Value a, Value s) {
  const Matrix& sv = node(s).val;
  if (sv.rows != 1 || sv.cols != 1)
    throw std::invalid_argument("Tape::scale_by: scale must be 1x1, got " + sv.shape());
  const Matrix out = aptkit::scale(node(a).val, sv(0, 0));
  const bool ng = node(a).needs_grad || node(s).needs_grad;
  const std::size_t ai = a.idx, si = s.idx;
  return push(out, ng, [ai, si](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.nodes_[ai].val;
    const double c = t.nodes_[si].val(0, 0);
    if (t.nodes_[ai].needs_grad) {
      Matrix ga(g.rows, g.cols);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] = g.data[i] * c;
      t.accumulate(ai, ga);
    }
    if (t.nodes_[si].needs_grad) {
      Matrix gs(1, 1);
      for (std::size_t i = 0; i < g.data.size(); ++i) gs.data[0] += g.data[i] * av.data[i];
      t.accumulate(si, gs);
    }
  });
}

Value Tape::transpose(Value a) {
  const Matrix out = aptkit::transpose(node(a).val);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai](Tape& t, std::size_t self) {
    t.accumulate(ai, aptkit::transpose(t.nodes_[self].grad));
  });
}

Value Tape::concat_rows(Value a, Value b) {
  const Matrix out = aptkit::concat_rows(node(a).val, node(b).val);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  const std::size_t ai = a.idx, bi = b.idx;
  const std::size_t arows = node(a).val.rows;
  return push(out, ng, [ai, bi, arows](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, aptkit::slice_rows(g, 0, arows));
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, aptkit::slice_rows(g, arows, g.rows));
  });
}

Value Tape::slice_rows(Value a, std::size_t begin, std::size_t end) {
  const Matrix out = aptkit::slice_rows(node(a).val, begin, end);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.nodes_[ai].val;
    Matrix ga(av.rows, av.cols);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(begin + i, j) = g(i, j);
    t.accumulate(ai, ga);
  });
}

Value Tape::softmax_rows(Value a) {
  const Matrix out = aptkit::softmax_rows(node(a).val);
  const std::size_t ai = a.idx;
  // d(softmax)/dx pullback: y o (g - rowsum(g o y)).
  return push(out, node(a).needs_grad, [ai](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].val;
    Matrix ga(g.rows, g.cols);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(ai, ga);
  });
}

Value Tape::relu(Value a) {
  const Matrix out = aptkit::relu(node(a).val);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.nodes_[ai].val;
    Matrix ga(g.rows, g.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] = av.data[i] > 0.0 ? g.data[i] : 0.0;
    t.accumulate(ai, ga);
  });
}

Value Tape::global_max(Value a) {
  const Matrix& av = node(a).val;
  const auto [mi, mj] = global_argmax(av);
  Matrix out(1, 1);
  out(0, 0) = aptkit::global_max(av);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai, mi = mi, mj = mj](Tape& t, std::size_t self) {
    const Matrix& av = t.nodes_[ai].val;
    Matrix ga(av.rows, av.cols);
    ga(mi, mj) = t.nodes_[self].grad(0, 0);
    t.accumulate(ai, ga);
  });
}

Value Tape::exp_scalar(Value a) {
  const Matrix& av = node(a).val;
  if (av.rows != 1 || av.cols != 1)
    throw std::invalid_argument("Tape::exp_scalar: input must be 1x1, got " + av.shape());
  Matrix out(1, 1);
  out(0, 0) = std::exp(av(0, 0));
  record_exps(1);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai](Tape& t, std::size_t self) {
    Matrix ga(1, 1);
    ga(0, 0) = t.nodes_[self].grad(0, 0) * t.nodes_[self].val(0, 0);
    t.accumulate(ai, ga);
  });
}

Value Tape::reduce_sum(Value a) {
  Matrix out(1, 1);
  out(0, 0) = sum(node(a).val);
  const std::size_t ai = a.idx;
  return push(out, node(a).needs_grad, [ai](Tape& t, std::size_t self) {
    const Matrix& av = t.nodes_[ai].val;
    const double g = t.nodes_[self].grad(0, 0);
    Matrix ga(av.rows, av.cols);
    for (double& v : ga.data) v = g;
    t.accumulate(ai, ga);
  });
}

void Tape::backward(Value loss) {
  const Node& l = node(loss);
  if (l.val.rows != 1 || l.val.cols != 1)
    throw std::invalid_argument("Tape::backward: loss must be 1x1, got " + l.val.shape());
  if (!l.needs_grad)
    throw std::invalid_argument("Tape::backward: loss does not depend on any leaf");

  for (Node& n : nodes_) n.grad = Matrix();
  Matrix seed(1, 1);
  seed(0, 0) = 1.0;
  nodes_[loss.idx].grad = seed;
  for (std::size_t i = loss.idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.vjp && !n.grad.empty()) n.vjp(*this, i);
  }
}

}  // namespace aptkit
