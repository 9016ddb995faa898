#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape owns every intermediate value. Operations append nodes and, when the
// tape is recording, a closure that pushes the node's adjoint into its
// parents. Rows are batch items throughout (B x features).

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace eddi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double>;

namespace ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

class Tape {
 public:
  // A non-recording tape evaluates values only; backward() is unavailable.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Matrix value);
  // Leaf whose gradient is retained after backward().
  Var parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Accumulated adjoint; zero matrix of the right shape if never reached.
  Matrix grad(Var v) const;

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Internal: used by the operation definitions.
  using Backward = std::function<void(Tape&, std::size_t)>;
  Var push(Matrix value, std::span<const Var> parents, Backward backward, const char* op);
  Var push_opaque(Matrix value, std::span<const Var> parents, const char* op);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  Matrix& adjoint(std::size_t id);
  const Matrix& adjoint_of_self(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    const char* op = "";
    bool needs_grad = false;
    bool opaque = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

// ---- elementwise and structural primitives ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a + row (row is 1 x cols, broadcast over rows of a).
Var add_row(Var a, Var row);
// Elementwise product with a constant matrix of the same shape.
Var mul_const(Var a, const Matrix& c);
// Each row r of a multiplied by c[r].
Var scale_rows(Var a, const Vector& c);

Var matmul(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
// Values outside [lo, hi] are clamped; gradient is zero where clamped.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);        // -> 1x1
Var mean(Var a);       // -> 1x1
Var row_sum(Var a);    // B x C -> B x 1

Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Index start, Index count);
Var gather_cols(Var a, std::span<const Index> cols);
// out[k] = table[idx[k]]; backward scatter-adds into the gathered rows only.
Var gather_rows(Var table, std::span<const Index> idx);
// out[s] = sum of rows k with segment[k] == s, accumulated in k order.
Var segment_sum(Var a, std::span<const Index> segment, Index segments);
// Constant sparse matrix times b.
Var sparse_matmul(const SparseMatrix& a, Var b);

// Elementwise map with no known derivative. Reaching it during backward()
// raises a capability error.
Var apply_opaque(Var a, const std::function<double(double)>& f, const char* name);

}  // namespace ad
}  // namespace eddi
