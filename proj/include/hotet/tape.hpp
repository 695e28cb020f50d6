#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hotet/errors.hpp"

namespace hotet::ad {

using Mat = Eigen::MatrixXd;

enum class OpKind : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,   // elementwise
  kDiv,   // elementwise
  kScale,
  kAddScalar,
  kMatMul,
  kTranspose,
  kSoftplus,
  kSigmoid,
  kRelu,
  kExp,
  kRsqrt,  // (x + eps)^(-1/2)
  kSum,    // full reduce -> 1x1
  kRowSum,
  kColSum,
  kBroadcastScalar,  // 1x1 -> rows x cols
  kBroadcastCol,     // rx1 -> r x cols
  kBroadcastRow,     // 1xc -> rows x c
  kGatherRows,
  kScatterRows,  // adjoint of gather: add rows of a into target of given height
  kSliceCols,
  kConcatCols,
  kReshape,  // row-major element order
  kSoftmaxRowsShifted,
  kReluMask,  // constant-captured derivative mask, see backward()
};

class Tape;

/// Lightweight handle to a tape node. Copyable, trivially small.
struct Var {
  int id = -1;
  Tape* tape = nullptr;
  bool valid() const { return id >= 0 && tape != nullptr; }
};

struct Node {
  OpKind kind;
  int a = -1;
  int b = -1;
  double scalar = 0.0;              // kScale / kAddScalar / kRsqrt eps
  int rows = 0, cols = 0;           // broadcast / reshape / scatter target shape
  std::vector<int> indices;         // gather/scatter row indices, concat operand ids
  Eigen::VectorXd shift;            // per-key logit shift for weighted softmax
  Mat value;
  bool requires_grad = false;
  bool is_leaf = false;             // bindable input (parameter or data)
};

/// Append-only record of primitive operations over dense matrices.
///
/// Values are computed eagerly at node creation and every operation checks
/// its result for NaN/Inf (NumericalError on violation). The record can be
/// replayed after rebinding leaves; replay recomputes every node in order
/// and reproduces values bit-for-bit for identical leaves. Row selections
/// made while building (gather indices, relu derivative masks) are frozen
/// into the record, which is the envelope convention the solvers rely on.
///
/// backward() emits adjoints as ordinary nodes on the same tape, so a
/// gradient is itself differentiable: second-order compositions such as a
/// loss containing the input-gradient of a network need no special path.
///
/// Single writer per tape; a finished tape is safe to read from anywhere.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- leaves ---------------------------------------------------------------

  /// Differentiable leaf (parameter or input we may differentiate w.r.t.).
  Var leaf(const Mat& v);
  /// Non-differentiable leaf (data, frozen parameters, masks).
  Var constant(const Mat& v);
  Var constant(double v) { return constant(Mat::Constant(1, 1, v)); }

  // -- primitives -----------------------------------------------------------

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var div(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var rsqrt(Var a, double eps);
  Var sum(Var a);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var broadcast_scalar(Var a, int rows, int cols);
  Var broadcast_col(Var a, int cols);
  Var broadcast_row(Var a, int rows);
  Var gather_rows(Var a, std::vector<int> idx);
  Var slice_cols(Var a, int first, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var reshape(Var a, int rows, int cols);
  /// Row-wise softmax of (logits + shift broadcast over rows). Entries whose
  /// shift is -inf are masked out (probability exactly zero). Gradient flows
  /// to the logits only.
  Var softmax_rows_shifted(Var logits, const Eigen::VectorXd& shift);

  // -- composites -----------------------------------------------------------

  Var mean(Var a);
  /// 0.5 * ||x||^2 per row: b x d -> b x 1.
  Var half_sq_norm_rows(Var x);

  // -- access ---------------------------------------------------------------

  const Mat& value(Var v) const { return node(v.id).value; }
  double scalar_value(Var v) const;
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  // -- replay ---------------------------------------------------------------

  /// Rebind a leaf (shape must match). Values become stale until replay().
  void set_leaf(Var v, const Mat& m);
  /// Recompute every node in order from the current leaf values.
  void replay();
  /// Convenience: rebind, replay and return the value of `out`.
  Mat eval(Var out, const std::vector<std::pair<Var, Mat>>& bindings);

  // -- differentiation ------------------------------------------------------

  /// Reverse pass from scalar `output`; returns the gradient node for each
  /// requested variable (zeros when the output does not depend on it). The
  /// gradients live on this tape and may be differentiated again.
  std::vector<Var> backward(Var output, std::span<const Var> wrt);
  Var backward(Var output, Var wrt);

 private:
  Var push(Node n, const char* opname);
  void compute(Node& n) const;
  Var wrap(int id) { return Var{id, this}; }
  Node& mutable_node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
};

// Expression-style free functions over Vars (all nodes land on the Vars' tape).
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }
inline Var operator*(Var a, double s) { return a.tape->scale(a, s); }
inline Var operator-(Var a) { return a.tape->scale(a, -1.0); }
inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var transpose(Var a) { return a.tape->transpose(a); }
inline Var softplus(Var a) { return a.tape->softplus(a); }
inline Var sigmoid(Var a) { return a.tape->sigmoid(a); }
inline Var relu(Var a) { return a.tape->relu(a); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var mean(Var a) { return a.tape->mean(a); }
inline Var row_sum(Var a) { return a.tape->row_sum(a); }

}  // namespace hotet::ad
