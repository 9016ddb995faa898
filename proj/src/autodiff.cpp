#include "eddi/autodiff.hpp"

#include <cmath>
#include <string>

#include "eddi/error.hpp"

namespace eddi::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) fail(ErrorKind::argument, "variables belong to different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                               std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
  }
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "constant", false, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "parameter", record_, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward, const char* op) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, op, needs, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push_opaque(Matrix value, std::span<const Var> parents, const char* op) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, {}, op, needs, true});
  return Var{this, nodes_.size() - 1};
}

Matrix& Tape::adjoint(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (!record_) fail(ErrorKind::capability, "backward() on a non-recording tape");
  if (root.tape != this) fail(ErrorKind::argument, "root belongs to another tape");
  const Node& r = nodes_[root.id];
  if (r.value.rows() != 1 || r.value.cols() != 1) fail(ErrorKind::shape, "backward() root must be a scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  adjoint(root.id)(0, 0) = 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.opaque) {
      fail(ErrorKind::capability, std::string("no derivative for primitive '") + n.op + "'", n.op);
    }
    if (n.backward) n.backward(*this, id);
  }
}

// ---- elementwise ----

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Var ps[] = {a, b};
  return a.tape->push(a.value() + b.value(), ps, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g;
    if (t.needs_grad(b)) t.adjoint(b.id) += g;
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Var ps[] = {a, b};
  return a.tape->push(a.value() - b.value(), ps, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g;
    if (t.needs_grad(b)) t.adjoint(b.id) -= g;
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Var ps[] = {a, b};
  return a.tape->push(a.value().cwiseProduct(b.value()), ps, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g.cwiseProduct(b.value());
    if (t.needs_grad(b)) t.adjoint(b.id) += g.cwiseProduct(a.value());
  }, "mul");
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  Var ps[] = {a, b};
  return a.tape->push(a.value().cwiseQuotient(b.value()), ps, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g.cwiseQuotient(b.value());
    if (t.needs_grad(b)) {
      t.adjoint(b.id) -= g.cwiseProduct(a.value()).cwiseQuotient(b.value().cwiseProduct(b.value()));
    }
  }, "div");
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Var ps[] = {a};
  return a.tape->push(a.value() * s, ps, [a, s](Tape& t, std::size_t self) {
    t.adjoint(a.id) += t.adjoint_of_self(self) * s;
  }, "scale");
}

Var add_scalar(Var a, double s) {
  Var ps[] = {a};
  return a.tape->push((a.value().array() + s).matrix(), ps, [a](Tape& t, std::size_t self) {
    t.adjoint(a.id) += t.adjoint_of_self(self);
  }, "add_scalar");
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) fail(ErrorKind::shape, "add_row: row vector width mismatch");
  Var ps[] = {a, row};
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->push(std::move(out), ps, [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g;
    if (t.needs_grad(row)) t.adjoint(row.id) += g.colwise().sum();
  }, "add_row");
}

Var mul_const(Var a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) fail(ErrorKind::shape, "mul_const: shape mismatch");
  Var ps[] = {a};
  return a.tape->push(a.value().cwiseProduct(c), ps, [a, c](Tape& t, std::size_t self) {
    t.adjoint(a.id) += t.adjoint_of_self(self).cwiseProduct(c);
  }, "mul_const");
}

Var scale_rows(Var a, const Vector& c) {
  if (c.size() != a.rows()) fail(ErrorKind::shape, "scale_rows: length mismatch");
  Var ps[] = {a};
  Matrix out = c.asDiagonal() * a.value();
  return a.tape->push(std::move(out), ps, [a, c](Tape& t, std::size_t self) {
    t.adjoint(a.id) += c.asDiagonal() * t.adjoint_of_self(self);
  }, "scale_rows");
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    fail(ErrorKind::shape, "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                               std::to_string(b.rows()) + " differ");
  }
  Var ps[] = {a, b};
  Matrix out = a.value() * b.value();
  return a.tape->push(std::move(out), ps, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id).noalias() += g * b.value().transpose();
    if (t.needs_grad(b)) t.adjoint(b.id).noalias() += a.value().transpose() * g;
  }, "matmul");
}

Var relu(Var a) {
  Var ps[] = {a};
  return a.tape->push(a.value().cwiseMax(0.0), ps, [a](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    t.adjoint(a.id) += (a.value().array() > 0.0).select(g, 0.0).matrix();
  }, "relu");
}

Var sigmoid(Var a) {
  Var ps[] = {a};
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape->push(std::move(out), ps, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{&t, self});
    const Matrix& g = t.adjoint_of_self(self);
    t.adjoint(a.id) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  }, "sigmoid");
}

Var exp(Var a) {
  Var ps[] = {a};
  return a.tape->push(a.value().array().exp().matrix(), ps, [a](Tape& t, std::size_t self) {
    t.adjoint(a.id) += t.adjoint_of_self(self).cwiseProduct(t.value(Var{&t, self}));
  }, "exp");
}

Var log(Var a) {
  Var ps[] = {a};
  return a.tape->push(a.value().array().log().matrix(), ps, [a](Tape& t, std::size_t self) {
    t.adjoint(a.id) += t.adjoint_of_self(self).cwiseQuotient(a.value());
  }, "log");
}

Var sqrt(Var a) {
  Var ps[] = {a};
  return a.tape->push(a.value().array().sqrt().matrix(), ps, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{&t, self});
    t.adjoint(a.id) += (t.adjoint_of_self(self).array() * 0.5 / y.array()).matrix();
  }, "sqrt");
}

Var square(Var a) {
  Var ps[] = {a};
  return a.tape->push(a.value().array().square().matrix(), ps, [a](Tape& t, std::size_t self) {
    t.adjoint(a.id) += (t.adjoint_of_self(self).array() * 2.0 * a.value().array()).matrix();
  }, "square");
}

Var clamp(Var a, double lo, double hi) {
  Var ps[] = {a};
  return a.tape->push(a.value().cwiseMax(lo).cwiseMin(hi), ps, [a, lo, hi](Tape& t, std::size_t self) {
    const auto& x = a.value().array();
    t.adjoint(a.id) += ((x >= lo) && (x <= hi)).select(t.adjoint_of_self(self), 0.0).matrix();
  }, "clamp");
}

// ---- reductions ----

Var sum(Var a) {
  Var ps[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), ps, [a](Tape& t, std::size_t self) {
    t.adjoint(a.id).array() += t.adjoint_of_self(self)(0, 0);
  }, "sum");
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) fail(ErrorKind::shape, "mean of an empty array");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Var ps[] = {a};
  Matrix out = a.value().rowwise().sum();
  return a.tape->push(std::move(out), ps, [a](Tape& t, std::size_t self) {
    Matrix& ga = t.adjoint(a.id);
    ga.colwise() += t.adjoint_of_self(self).col(0);
  }, "row_sum");
}

// ---- structural ----

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) fail(ErrorKind::shape, "concat_cols: row count mismatch");
  Var ps[] = {a, b};
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return a.tape->push(std::move(out), ps, [a, b, ca, cb](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    if (t.needs_grad(a)) t.adjoint(a.id) += g.leftCols(ca);
    if (t.needs_grad(b)) t.adjoint(b.id) += g.rightCols(cb);
  }, "concat_cols");
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) fail(ErrorKind::shape, "slice_cols: out of range");
  Var ps[] = {a};
  return a.tape->push(a.value().middleCols(start, count), ps, [a, start, count](Tape& t, std::size_t self) {
    t.adjoint(a.id).middleCols(start, count) += t.adjoint_of_self(self);
  }, "slice_cols");
}

Var gather_cols(Var a, std::span<const Index> cols) {
  std::vector<Index> idx(cols.begin(), cols.end());
  Matrix out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.cols()) fail(ErrorKind::shape, "gather_cols: index out of range");
    out.col(static_cast<Index>(k)) = a.value().col(idx[k]);
  }
  Var ps[] = {a};
  return a.tape->push(std::move(out), ps, [a, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    Matrix& ga = t.adjoint(a.id);
    for (std::size_t k = 0; k < idx.size(); ++k) ga.col(idx[k]) += g.col(static_cast<Index>(k));
  }, "gather_cols");
}

Var gather_rows(Var table, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  for (Index i : idx) {
    if (i < 0 || i >= table.rows()) fail(ErrorKind::shape, "gather_rows: index out of range");
  }
  const Matrix& src = table.value();
  const Index n = static_cast<Index>(idx.size());
  Matrix out(n, src.cols());
  // column by column: storage is column-major
  for (Index c = 0; c < src.cols(); ++c) {
    for (Index k = 0; k < n; ++k) out(k, c) = src(idx[static_cast<std::size_t>(k)], c);
  }
  Var ps[] = {table};
  return table.tape->push(std::move(out), ps, [table, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    Matrix& gt = t.adjoint(table.id);
    for (Index c = 0; c < g.cols(); ++c) {
      for (Index k = 0; k < g.rows(); ++k) gt(idx[static_cast<std::size_t>(k)], c) += g(k, c);
    }
  }, "gather_rows");
}

Var segment_sum(Var a, std::span<const Index> segment, Index segments) {
  if (static_cast<Index>(segment.size()) != a.rows()) fail(ErrorKind::shape, "segment_sum: segment length mismatch");
  std::vector<Index> seg(segment.begin(), segment.end());
  for (Index s : seg) {
    if (s < 0 || s >= segments) fail(ErrorKind::shape, "segment_sum: segment id out of range");
  }
  const Matrix& src = a.value();
  Matrix out = Matrix::Zero(segments, src.cols());
  for (Index c = 0; c < src.cols(); ++c) {
    for (Index k = 0; k < src.rows(); ++k) out(seg[static_cast<std::size_t>(k)], c) += src(k, c);
  }
  Var ps[] = {a};
  return a.tape->push(std::move(out), ps, [a, seg = std::move(seg)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint_of_self(self);
    Matrix& ga = t.adjoint(a.id);
    for (Index c = 0; c < ga.cols(); ++c) {
      for (Index k = 0; k < ga.rows(); ++k) ga(k, c) += g(seg[static_cast<std::size_t>(k)], c);
    }
  }, "segment_sum");
}

Var sparse_matmul(const SparseMatrix& a, Var b) {
  if (a.cols() != b.rows()) fail(ErrorKind::shape, "sparse_matmul: inner dimensions differ");
  Var ps[] = {b};
  Matrix out = a * b.value();
  return b.tape->push(std::move(out), ps, [a, b](Tape& t, std::size_t self) {
    t.adjoint(b.id).noalias() += a.transpose() * t.adjoint_of_self(self);
  }, "sparse_matmul");
}

Var apply_opaque(Var a, const std::function<double(double)>& f, const char* name) {
  Var ps[] = {a};
  return a.tape->push_opaque(a.value().unaryExpr(f), ps, name);
}

}  // namespace eddi::ad
