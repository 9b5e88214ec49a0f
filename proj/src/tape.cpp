#include "mtrnn/tape.hpp"

#include <cmath>

namespace mtrnn {

Var Tape::constant(Matrix v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr, nullptr, -1});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::zeros(int rows, int cols) {
  return constant(Matrix::Zero(rows, cols));
}

Var Tape::use(Parameter& p) {
  auto it = use_memo_.find(&p);
  if (it != use_memo_.end()) return Var{it->second};
  nodes_.push_back(Node{p.value, {}, nullptr, &p, -1});
  int id = static_cast<int>(nodes_.size()) - 1;
  use_memo_[&p] = id;
  touched_.push_back(&p);
  return Var{id};
}

Var Tape::lookup(Parameter& table, int row, bool trainable) {
  if (row < 0 || row >= table.value.rows())
    throw IndexError("lookup: row " + std::to_string(row) +
                     " out of range for table " + table.name + " with " +
                     std::to_string(table.value.rows()) + " rows");
  if (!trainable) return constant(table.value.row(row).transpose());
  auto key = std::make_pair(static_cast<const Parameter*>(&table), row);
  auto it = lookup_memo_.find(key);
  if (it != lookup_memo_.end()) return Var{it->second};
  nodes_.push_back(
      Node{table.value.row(row).transpose(), {}, nullptr, &table, row});
  int id = static_cast<int>(nodes_.size()) - 1;
  lookup_memo_[key] = id;
  bool seen = false;
  for (Parameter* p : touched_) seen = seen || p == &table;
  if (!seen) touched_.push_back(&table);
  return Var{id};
}

Var Tape::emit(Matrix value, BackFn back) {
  nodes_.push_back(Node{std::move(value), {}, std::move(back), nullptr, -1});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[check(v)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  if (g.rows() != n.grad.rows() || g.cols() != n.grad.cols())
    throw DimensionError("accumulate: gradient " + shape_str(g) +
                         " vs value " + shape_str(n.value));
  n.grad += g;
}

void Tape::backward(Var loss) {
  int root = check(loss);
  if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1)
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(nodes_[root].value));
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[root].grad(0, 0) = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back) n.back(*this, n.grad, n.value);
  }
  for (Node& n : nodes_) {
    if (!n.bound) continue;
    if (n.bound_row < 0)
      n.bound->grad += n.grad;
    else
      n.bound->grad.row(n.bound_row) += n.grad.transpose();
  }
}

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(av) +
                         " * " + shape_str(bv));
  Matrix v = av * bv;
  return t.emit(std::move(v), [a, b](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up * tp.value(b).transpose());
    tp.accumulate(b, tp.value(a).transpose() * up);
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape("add", t.value(a), t.value(b));
  Matrix v = t.value(a) + t.value(b);
  return t.emit(std::move(v), [a, b](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up);
    tp.accumulate(b, up);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape("sub", t.value(a), t.value(b));
  Matrix v = t.value(a) - t.value(b);
  return t.emit(std::move(v), [a, b](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up);
    tp.accumulate(b, -up);
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape("mul", t.value(a), t.value(b));
  Matrix v = t.value(a).cwiseProduct(t.value(b));
  return t.emit(std::move(v), [a, b](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up.cwiseProduct(tp.value(b)));
    tp.accumulate(b, up.cwiseProduct(tp.value(a)));
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix v = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
  // sigma' = s (1 - s), from the stored output
  return t.emit(std::move(v),
                [a](Tape& tp, const Matrix& up, const Matrix& out) {
                  tp.accumulate(
                      a, (up.array() * out.array() * (1.0 - out.array()))
                             .matrix());
                });
}

Var tanh(Tape& t, Var a) {
  Matrix v = t.value(a).array().tanh().matrix();
  return t.emit(std::move(v),
                [a](Tape& tp, const Matrix& up, const Matrix& out) {
                  tp.accumulate(
                      a, (up.array() * (1.0 - out.array().square())).matrix());
                });
}

Var concat(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() == 1 && bv.cols() == 1) {
    long p = av.rows();
    long q = bv.rows();
    Matrix v(p + q, 1);
    v.topRows(p) = av;
    v.bottomRows(q) = bv;
    return t.emit(std::move(v), [a, b, p, q](Tape& tp, const Matrix& up, const Matrix&) {
      tp.accumulate(a, up.topRows(p));
      tp.accumulate(b, up.bottomRows(q));
    });
  }
  if (av.rows() == bv.rows()) {
    long p = av.cols();
    long q = bv.cols();
    Matrix v(av.rows(), p + q);
    v.leftCols(p) = av;
    v.rightCols(q) = bv;
    return t.emit(std::move(v), [a, b, p, q](Tape& tp, const Matrix& up, const Matrix&) {
      tp.accumulate(a, up.leftCols(p));
      tp.accumulate(b, up.rightCols(q));
    });
  }
  throw DimensionError("concat: incompatible shapes " + shape_str(av) +
                       " vs " + shape_str(bv));
}

Var softmax(Tape& t, Var logits) {
  const Matrix& x = t.value(logits);
  if (x.rows() < 1 || x.cols() != 1)
    throw DimensionError("softmax: expected non-empty column vector, got " +
                         shape_str(x));
  double m = x.maxCoeff();
  Eigen::ArrayXd e = (x.array() - m).exp();
  Matrix v = (e / e.sum()).matrix();
  // Jacobian-vector product: s .* (up - <up, s>)
  return t.emit(std::move(v),
                [logits](Tape& tp, const Matrix& up, const Matrix& out) {
                  double dot = (up.array() * out.array()).sum();
                  tp.accumulate(
                      logits, (out.array() * (up.array() - dot)).matrix());
                });
}

Var scale(Tape& t, Var a, double s) {
  Matrix v = t.value(a) * s;
  return t.emit(std::move(v), [a, s](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up * s);
  });
}

Var pick(Tape& t, Var a, int index) {
  const Matrix& av = t.value(a);
  if (av.cols() != 1)
    throw DimensionError("pick: expected column vector, got " + shape_str(av));
  if (index < 0 || index >= av.rows())
    throw IndexError("pick: index " + std::to_string(index) +
                     " out of range for length " + std::to_string(av.rows()));
  Matrix v(1, 1);
  v(0, 0) = av(index, 0);
  return t.emit(std::move(v), [a, index](Tape& tp, const Matrix& up, const Matrix&) {
    Matrix g = Matrix::Zero(tp.value(a).rows(), 1);
    g(index, 0) = up(0, 0);
    tp.accumulate(a, g);
  });
}

Var log(Tape& t, Var a) {
  Matrix v = t.value(a).array().log().matrix();
  return t.emit(std::move(v), [a](Tape& tp, const Matrix& up, const Matrix&) {
    tp.accumulate(a, up.cwiseQuotient(tp.value(a)));
  });
}

}  // namespace mtrnn
