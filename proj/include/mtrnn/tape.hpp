#ifndef MTRNN_TAPE_HPP
#define MTRNN_TAPE_HPP

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtrnn/common.hpp"

namespace mtrnn {

/// A trainable tensor: value, gradient and Adagrad accumulator share one
/// shape. rank distinguishes vectors (stored d x 1) from matrices for
/// serialization; the math does not care.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix accumulator;
  int rank = 2;

  Parameter() = default;

  Parameter(std::string n, Matrix v, int r = 2)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        accumulator(Matrix::Zero(value.rows(), value.cols())),
        rank(r) {}

  static Parameter uniform(std::string n, int rows, int cols, Rng& rng,
                           double lo = -0.1, double hi = 0.1, int rank = 2) {
    Matrix v(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) v(i, j) = rng.uniform(lo, hi);
    return Parameter(std::move(n), std::move(v), rank);
  }

  static Parameter zeros(std::string n, int rows, int cols, int rank = 2) {
    return Parameter(std::move(n), Matrix::Zero(rows, cols), rank);
  }

  static Parameter constant(std::string n, int rows, int cols, double fill,
                            int rank = 2) {
    return Parameter(std::move(n), Matrix::Constant(rows, cols, fill), rank);
  }
};

/// Handle to a value on a Tape.
struct Var {
  int id = -1;
};

/// Record of executed operations. Values are computed eagerly at op
/// creation; creation order is the topological order, so backward() is a
/// single reverse sweep that visits each node exactly once. Gradients of
/// bound Parameters accumulate additively across all their uses.
class Tape {
 public:
  using BackFn =
      std::function<void(Tape&, const Matrix& upstream, const Matrix& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding a constant; receives no gradient flush.
  Var constant(Matrix v);
  Var zeros(int rows, int cols = 1);

  /// Leaf bound to a Parameter. Memoized: the same Parameter yields the
  /// same node, and its gradient is flushed into p.grad after backward().
  Var use(Parameter& p);

  /// Leaf holding row `row` of `table` as a column vector. When trainable,
  /// the gradient is flushed into table.grad.row(row).
  Var lookup(Parameter& table, int row, bool trainable = true);

  /// Core for building ops: append a node with precomputed value.
  Var emit(Matrix value, BackFn back);

  const Matrix& value(Var v) const { return nodes_[check(v)].value; }
  const Matrix& grad(Var v) const { return nodes_[check(v)].grad; }

  /// Called by backward rules to push gradient into an input node.
  void accumulate(Var v, const Matrix& g);

  /// Reverse sweep from a scalar loss; every Parameter bound to this tape
  /// receives its gradient contribution (added into Parameter::grad).
  void backward(Var loss);

  /// Parameters bound via use()/lookup(), in first-use order.
  const std::vector<Parameter*>& touched() const { return touched_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackFn back;
    Parameter* bound = nullptr;
    int bound_row = -1;  // >=0 for lookup nodes
  };

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw ContractError("tape: variable does not belong to this tape");
    return v.id;
  }

  std::vector<Node> nodes_;
  std::vector<Parameter*> touched_;
  std::map<const Parameter*, int> use_memo_;
  std::map<std::pair<const Parameter*, int>, int> lookup_memo_;
};

// Ops. All values are column vectors (n x 1) or matrices; binary
// elementwise ops require identical shapes and matmul checks inner
// dimensions, raising DimensionError naming both shapes otherwise.

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // elementwise
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);

/// Stacks column vectors vertically ([p;q] -> p+q), or matrices with equal
/// row counts horizontally.
Var concat(Tape& t, Var a, Var b);

/// Numerically stable softmax of a column vector (max-subtraction).
Var softmax(Tape& t, Var logits);

Var scale(Tape& t, Var a, double s);
Var pick(Tape& t, Var a, int index);  // scalar a(index, 0)
Var log(Tape& t, Var a);              // elementwise natural log

}  // namespace mtrnn

#endif
