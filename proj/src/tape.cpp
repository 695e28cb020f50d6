#include "hotet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hotet::ad {

namespace {

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow on either side.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Tape::check_same_tape(Var v) const {
  if (!v.valid() || v.tape != this)
    throw ShapeError("tape: variable does not belong to this tape");
  if (static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ShapeError("tape: variable id out of range");
}

Var Tape::push(Node n, const char* opname) {
  compute(n);
  if (!n.value.allFinite())
    throw NumericalError(std::string(opname) + ": non-finite values");
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size()) - 1);
}

double Tape::scalar_value(Var v) const {
  check_same_tape(v);
  const Mat& m = node(v.id).value;
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar_value: not 1x1");
  return m(0, 0);
}

Var Tape::leaf(const Mat& v) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = v;
  n.requires_grad = true;
  n.is_leaf = true;
  return push(n, "leaf");
}

Var Tape::constant(const Mat& v) {
  Node n;
  n.kind = OpKind::kConst;
  n.value = v;
  n.requires_grad = false;
  n.is_leaf = true;
  return push(n, "constant");
}

#define HOTET_BINARY_PROLOGUE(a, b)                   \
  check_same_tape(a);                                 \
  check_same_tape(b);                                 \
  Node n;                                             \
  n.a = a.id;                                         \
  n.b = b.id;                                         \
  n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;

#define HOTET_UNARY_PROLOGUE(a)                       \
  check_same_tape(a);                                 \
  Node n;                                             \
  n.a = a.id;                                         \
  n.requires_grad = node(a.id).requires_grad;

Var Tape::add(Var a, Var b) {
  HOTET_BINARY_PROLOGUE(a, b)
  n.kind = OpKind::kAdd;
  return push(n, "add");
}

Var Tape::sub(Var a, Var b) {
  HOTET_BINARY_PROLOGUE(a, b)
  n.kind = OpKind::kSub;
  return push(n, "sub");
}

Var Tape::mul(Var a, Var b) {
  HOTET_BINARY_PROLOGUE(a, b)
  n.kind = OpKind::kMul;
  return push(n, "mul");
}

Var Tape::div(Var a, Var b) {
  HOTET_BINARY_PROLOGUE(a, b)
  n.kind = OpKind::kDiv;
  return push(n, "div");
}

Var Tape::scale(Var a, double s) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kScale;
  n.scalar = s;
  return push(n, "scale");
}

Var Tape::add_scalar(Var a, double s) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kAddScalar;
  n.scalar = s;
  return push(n, "add_scalar");
}

Var Tape::matmul(Var a, Var b) {
  HOTET_BINARY_PROLOGUE(a, b)
  n.kind = OpKind::kMatMul;
  return push(n, "matmul");
}

Var Tape::transpose(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kTranspose;
  return push(n, "transpose");
}

Var Tape::softplus(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kSoftplus;
  return push(n, "softplus");
}

Var Tape::sigmoid(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kSigmoid;
  return push(n, "sigmoid");
}

Var Tape::relu(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kRelu;
  return push(n, "relu");
}

Var Tape::exp(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kExp;
  return push(n, "exp");
}

Var Tape::rsqrt(Var a, double eps) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kRsqrt;
  n.scalar = eps;
  return push(n, "rsqrt");
}

Var Tape::sum(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kSum;
  return push(n, "sum");
}

Var Tape::row_sum(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kRowSum;
  return push(n, "row_sum");
}

Var Tape::col_sum(Var a) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kColSum;
  return push(n, "col_sum");
}

Var Tape::broadcast_scalar(Var a, int rows, int cols) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kBroadcastScalar;
  n.rows = rows;
  n.cols = cols;
  return push(n, "broadcast_scalar");
}

Var Tape::broadcast_col(Var a, int cols) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kBroadcastCol;
  n.cols = cols;
  return push(n, "broadcast_col");
}

Var Tape::broadcast_row(Var a, int rows) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kBroadcastRow;
  n.rows = rows;
  return push(n, "broadcast_row");
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kGatherRows;
  n.indices = std::move(idx);
  return push(n, "gather_rows");
}

Var Tape::slice_cols(Var a, int first, int count) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kSliceCols;
  n.rows = first;  // reuse: rows := first column, cols := count
  n.cols = count;
  return push(n, "slice_cols");
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Node n;
  n.kind = OpKind::kConcatCols;
  for (Var p : parts) {
    check_same_tape(p);
    n.indices.push_back(p.id);
    n.requires_grad = n.requires_grad || node(p.id).requires_grad;
  }
  return push(n, "concat_cols");
}

Var Tape::reshape(Var a, int rows, int cols) {
  HOTET_UNARY_PROLOGUE(a)
  n.kind = OpKind::kReshape;
  n.rows = rows;
  n.cols = cols;
  return push(n, "reshape");
}

Var Tape::softmax_rows_shifted(Var logits, const Eigen::VectorXd& shift) {
  HOTET_UNARY_PROLOGUE(logits)
  n.kind = OpKind::kSoftmaxRowsShifted;
  n.shift = shift;
  return push(n, "softmax_rows_shifted");
}

Var Tape::mean(Var a) {
  const auto& v = value(a);
  return scale(sum(a), 1.0 / static_cast<double>(v.size()));
}

Var Tape::half_sq_norm_rows(Var x) { return scale(row_sum(mul(x, x)), 0.5); }

void Tape::compute(Node& n) const {
  auto val = [&](int id) -> const Mat& { return node(id).value; };
  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kConst:
      if (n.value.size() == 0) throw ShapeError("leaf: empty tensor");
      break;
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv: {
      const Mat& a = val(n.a);
      const Mat& b = val(n.b);
      if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("elementwise op: shape mismatch");
      switch (n.kind) {
        case OpKind::kAdd: n.value = a + b; break;
        case OpKind::kSub: n.value = a - b; break;
        case OpKind::kMul: n.value = a.cwiseProduct(b); break;
        default: n.value = a.cwiseQuotient(b); break;
      }
      break;
    }
    case OpKind::kScale:
      n.value = n.scalar * val(n.a);
      break;
    case OpKind::kAddScalar:
      n.value = val(n.a).array() + n.scalar;
      break;
    case OpKind::kMatMul: {
      const Mat& a = val(n.a);
      const Mat& b = val(n.b);
      if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
      n.value = a * b;
      break;
    }
    case OpKind::kTranspose:
      n.value = val(n.a).transpose();
      break;
    case OpKind::kSoftplus:
      n.value = val(n.a).unaryExpr([](double x) { return softplus_scalar(x); });
      break;
    case OpKind::kSigmoid:
      n.value = val(n.a).unaryExpr([](double x) { return sigmoid_scalar(x); });
      break;
    case OpKind::kRelu:
      n.value = val(n.a).cwiseMax(0.0);
      break;
    case OpKind::kExp:
      n.value = val(n.a).array().exp();
      break;
    case OpKind::kRsqrt:
      n.value = (val(n.a).array() + n.scalar).rsqrt();
      break;
    case OpKind::kSum:
      n.value = Mat::Constant(1, 1, val(n.a).sum());
      break;
    case OpKind::kRowSum:
      n.value = val(n.a).rowwise().sum();
      break;
    case OpKind::kColSum:
      n.value = val(n.a).colwise().sum();
      break;
    case OpKind::kBroadcastScalar: {
      const Mat& a = val(n.a);
      if (a.rows() != 1 || a.cols() != 1) throw ShapeError("broadcast_scalar: source not 1x1");
      n.value = Mat::Constant(n.rows, n.cols, a(0, 0));
      break;
    }
    case OpKind::kBroadcastCol: {
      const Mat& a = val(n.a);
      if (a.cols() != 1) throw ShapeError("broadcast_col: source not a column");
      n.value = a.replicate(1, n.cols);
      break;
    }
    case OpKind::kBroadcastRow: {
      const Mat& a = val(n.a);
      if (a.rows() != 1) throw ShapeError("broadcast_row: source not a row");
      n.value = a.replicate(n.rows, 1);
      break;
    }
    case OpKind::kGatherRows: {
      const Mat& a = val(n.a);
      n.value.resize(static_cast<Eigen::Index>(n.indices.size()), a.cols());
      for (std::size_t k = 0; k < n.indices.size(); ++k) {
        const int r = n.indices[k];
        if (r < 0 || r >= a.rows()) throw ShapeError("gather_rows: index out of range");
        n.value.row(static_cast<Eigen::Index>(k)) = a.row(r);
      }
      break;
    }
    case OpKind::kScatterRows: {
      const Mat& a = val(n.a);
      if (a.rows() != static_cast<Eigen::Index>(n.indices.size()))
        throw ShapeError("scatter_rows: index count mismatch");
      n.value = Mat::Zero(n.rows, a.cols());
      for (std::size_t k = 0; k < n.indices.size(); ++k)
        n.value.row(n.indices[k]) += a.row(static_cast<Eigen::Index>(k));
      break;
    }
    case OpKind::kSliceCols: {
      const Mat& a = val(n.a);
      if (n.rows < 0 || n.rows + n.cols > a.cols()) throw ShapeError("slice_cols: out of range");
      n.value = a.middleCols(n.rows, n.cols);
      break;
    }
    case OpKind::kConcatCols: {
      Eigen::Index rows = val(n.indices[0]).rows();
      Eigen::Index cols = 0;
      for (int id : n.indices) {
        if (val(id).rows() != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += val(id).cols();
      }
      n.value.resize(rows, cols);
      Eigen::Index at = 0;
      for (int id : n.indices) {
        n.value.middleCols(at, val(id).cols()) = val(id);
        at += val(id).cols();
      }
      break;
    }
    case OpKind::kReshape: {
      const Mat& a = val(n.a);
      if (a.size() != static_cast<Eigen::Index>(n.rows) * n.cols)
        throw ShapeError("reshape: element count mismatch");
      // Row-major element order, matching the checkpoint layout.
      n.value.resize(n.rows, n.cols);
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j, ++k)
          n.value(k / n.cols, k % n.cols) = a(i, j);
      break;
    }
    case OpKind::kSoftmaxRowsShifted: {
      const Mat& a = val(n.a);
      if (n.shift.size() != a.cols()) throw ShapeError("softmax: shift length mismatch");
      n.value.resize(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          const double s = n.shift(j);
          if (std::isinf(s) && s < 0) continue;
          m = std::max(m, a(i, j) + s);
        }
        if (std::isinf(m)) throw NumericalError("softmax: every key is masked out");
        double z = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          const double s = n.shift(j);
          double p = 0.0;
          if (!(std::isinf(s) && s < 0)) p = std::exp(a(i, j) + s - m);
          n.value(i, j) = p;
          z += p;
        }
        n.value.row(i) /= z;
      }
      break;
    }
    case OpKind::kReluMask:
      n.value = (val(n.a).array() > 0.0).cast<double>();
      break;
  }
}

void Tape::set_leaf(Var v, const Mat& m) {
  check_same_tape(v);
  Node& n = mutable_node(v.id);
  if (!n.is_leaf) throw ShapeError("set_leaf: node is not a leaf");
  if (n.value.rows() != m.rows() || n.value.cols() != m.cols())
    throw ShapeError("set_leaf: shape mismatch");
  if (!m.allFinite()) throw NumericalError("set_leaf: non-finite values");
  n.value = m;
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.is_leaf) continue;
    compute(n);
    if (!n.value.allFinite()) throw NumericalError("replay: non-finite intermediate");
  }
}

Mat Tape::eval(Var out, const std::vector<std::pair<Var, Mat>>& bindings) {
  check_same_tape(out);
  for (const auto& [v, m] : bindings) set_leaf(v, m);
  replay();
  return value(out);
}

std::vector<Var> Tape::backward(Var output, std::span<const Var> wrt) {
  check_same_tape(output);
  const Node& out = node(output.id);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ShapeError("backward: output must be scalar");

  // Mark ancestors of the output.
  std::vector<char> reach(nodes_.size(), 0);
  {
    std::vector<int> stack{output.id};
    reach[static_cast<std::size_t>(output.id)] = 1;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      const Node& n = node(id);
      auto visit = [&](int op) {
        if (op >= 0 && !reach[static_cast<std::size_t>(op)]) {
          reach[static_cast<std::size_t>(op)] = 1;
          stack.push_back(op);
        }
      };
      visit(n.a);
      visit(n.b);
      if (n.kind == OpKind::kConcatCols)
        for (int op : n.indices) visit(op);
    }
  }

  const int n_fwd = static_cast<int>(nodes_.size());
  std::vector<int> grad(nodes_.size(), -1);
  grad[static_cast<std::size_t>(output.id)] = constant(Mat::Ones(1, 1)).id;

  auto accumulate = [&](int target, Var g) {
    if (target < 0) return;
    const Node& tn = node(target);
    if (!tn.requires_grad || !reach[static_cast<std::size_t>(target)]) return;
    auto& slot = grad[static_cast<std::size_t>(target)];
    slot = (slot < 0) ? g.id : add(wrap(slot), g).id;
  };

  for (int id = n_fwd - 1; id >= 0; --id) {
    if (grad[static_cast<std::size_t>(id)] < 0) continue;
    const Node n = node(id);  // copy: pushes below may reallocate nodes_
    if (!n.requires_grad) continue;
    const Var g = wrap(grad[static_cast<std::size_t>(id)]);
    const Var self = wrap(id);
    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kConst:
        break;
      case OpKind::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case OpKind::kSub:
        accumulate(n.a, g);
        accumulate(n.b, scale(g, -1.0));
        break;
      case OpKind::kMul:
        accumulate(n.a, mul(g, wrap(n.b)));
        accumulate(n.b, mul(g, wrap(n.a)));
        break;
      case OpKind::kDiv:
        accumulate(n.a, div(g, wrap(n.b)));
        accumulate(n.b, scale(mul(g, div(self, wrap(n.b))), -1.0));
        break;
      case OpKind::kScale:
        accumulate(n.a, scale(g, n.scalar));
        break;
      case OpKind::kAddScalar:
        accumulate(n.a, g);
        break;
      case OpKind::kMatMul:
        if (node(n.a).requires_grad) accumulate(n.a, matmul(g, transpose(wrap(n.b))));
        if (node(n.b).requires_grad) accumulate(n.b, matmul(transpose(wrap(n.a)), g));
        break;
      case OpKind::kTranspose:
        accumulate(n.a, transpose(g));
        break;
      case OpKind::kSoftplus:
        accumulate(n.a, mul(g, sigmoid(wrap(n.a))));
        break;
      case OpKind::kSigmoid: {
        const Var one_minus = add_scalar(scale(self, -1.0), 1.0);
        accumulate(n.a, mul(g, mul(self, one_minus)));
        break;
      }
      case OpKind::kRelu: {
        // Derivative mask captured as a constant (relu'' = 0 a.e.; the kink
        // uses the 0 subgradient). Frozen across replays like gather indices.
        Node mask;
        mask.kind = OpKind::kReluMask;
        mask.a = n.a;
        mask.requires_grad = false;
        accumulate(n.a, mul(g, push(mask, "relu_mask")));
        break;
      }
      case OpKind::kExp:
        accumulate(n.a, mul(g, self));
        break;
      case OpKind::kRsqrt: {
        const Var cube = mul(self, mul(self, self));
        accumulate(n.a, mul(g, scale(cube, -0.5)));
        break;
      }
      case OpKind::kSum:
        accumulate(n.a, broadcast_scalar(g, static_cast<int>(node(n.a).value.rows()),
                                         static_cast<int>(node(n.a).value.cols())));
        break;
      case OpKind::kRowSum:
        accumulate(n.a, broadcast_col(g, static_cast<int>(node(n.a).value.cols())));
        break;
      case OpKind::kColSum:
        accumulate(n.a, broadcast_row(g, static_cast<int>(node(n.a).value.rows())));
        break;
      case OpKind::kBroadcastScalar:
        accumulate(n.a, sum(g));
        break;
      case OpKind::kBroadcastCol:
        accumulate(n.a, row_sum(g));
        break;
      case OpKind::kBroadcastRow:
        accumulate(n.a, col_sum(g));
        break;
      case OpKind::kGatherRows: {
        Node sc;
        sc.kind = OpKind::kScatterRows;
        sc.a = g.id;
        sc.indices = n.indices;
        sc.rows = static_cast<int>(node(n.a).value.rows());
        sc.requires_grad = true;
        accumulate(n.a, push(sc, "scatter_rows"));
        break;
      }
      case OpKind::kScatterRows:
        accumulate(n.a, gather_rows(g, n.indices));
        break;
      case OpKind::kSliceCols: {
        const Node& src = node(n.a);
        const int before = n.rows;
        const int after = static_cast<int>(src.value.cols()) - before - n.cols;
        std::vector<Var> parts;
        if (before > 0)
          parts.push_back(constant(Mat::Zero(src.value.rows(), before)));
        parts.push_back(g);
        if (after > 0) parts.push_back(constant(Mat::Zero(src.value.rows(), after)));
        accumulate(n.a, parts.size() == 1 ? g : concat_cols(parts));
        break;
      }
      case OpKind::kConcatCols: {
        int at = 0;
        for (int op : n.indices) {
          const int w = static_cast<int>(node(op).value.cols());
          if (node(op).requires_grad) accumulate(op, slice_cols(g, at, w));
          at += w;
        }
        break;
      }
      case OpKind::kReshape:
        accumulate(n.a, reshape(g, static_cast<int>(node(n.a).value.rows()),
                                static_cast<int>(node(n.a).value.cols())));
        break;
      case OpKind::kSoftmaxRowsShifted: {
        const Var gs = mul(g, self);
        const Var corr = broadcast_col(row_sum(gs), static_cast<int>(n.value.cols()));
        accumulate(n.a, mul(self, sub(g, corr)));
        break;
      }
      case OpKind::kReluMask:
        break;
    }
  }

  std::vector<Var> out_vars;
  out_vars.reserve(wrt.size());
  for (Var v : wrt) {
    check_same_tape(v);
    const int gid = grad[static_cast<std::size_t>(v.id)];
    if (gid >= 0) {
      out_vars.push_back(wrap(gid));
    } else {
      out_vars.push_back(constant(Mat::Zero(node(v.id).value.rows(), node(v.id).value.cols())));
    }
  }
  return out_vars;
}

Var Tape::backward(Var output, Var wrt) {
  const Var w[] = {wrt};
  return backward(output, std::span<const Var>(w, 1))[0];
}

}  // namespace hotet::ad
