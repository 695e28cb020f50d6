#include "hotet/icnn.hpp"

#include <cmath>

#include "hotet/errors.hpp"

namespace hotet {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::int64_t IcnnSpec::param_count() const {
  std::int64_t n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<std::int64_t>(out_width(l)) * z_width(l) +
         static_cast<std::int64_t>(out_width(l)) * input_dim + out_width(l);
  return n;
}

void icnn_validate(const IcnnParams& p) {
  const IcnnSpec& s = p.spec;
  if (s.input_dim < 1) throw ShapeError("icnn: input_dim must be positive");
  const auto L = static_cast<std::size_t>(s.layer_count());
  if (p.A.size() != L || p.W.size() != L || p.b.size() != L)
    throw ShapeError("icnn: layer count mismatch");
  for (int l = 0; l < s.layer_count(); ++l) {
    const auto lu = static_cast<std::size_t>(l);
    if (p.A[lu].rows() != s.out_width(l) || p.A[lu].cols() != s.z_width(l))
      throw ShapeError("icnn: A shape mismatch at layer " + std::to_string(l));
    if (p.W[lu].rows() != s.out_width(l) || p.W[lu].cols() != s.input_dim)
      throw ShapeError("icnn: W shape mismatch at layer " + std::to_string(l));
    if (p.b[lu].size() != s.out_width(l))
      throw ShapeError("icnn: b shape mismatch at layer " + std::to_string(l));
    if ((p.A[lu].array() < 0.0).any())
      throw ShapeError("icnn: negative A entry at layer " + std::to_string(l) +
                       " (run project_nonneg first)");
    if (!p.A[lu].allFinite() || !p.W[lu].allFinite() || !p.b[lu].allFinite())
      throw NumericalError("icnn: non-finite parameter");
  }
}

IcnnParams icnn_zero(const IcnnSpec& spec) {
  IcnnParams p;
  p.spec = spec;
  for (int l = 0; l < spec.layer_count(); ++l) {
    p.A.emplace_back(Mat::Zero(spec.out_width(l), spec.z_width(l)));
    p.W.emplace_back(Mat::Zero(spec.out_width(l), spec.input_dim));
    p.b.emplace_back(Eigen::VectorXd::Zero(spec.out_width(l)));
  }
  return p;
}

IcnnParams project_nonneg(IcnnParams p) {
  for (auto& a : p.A) a = a.cwiseMax(0.0);
  return p;
}

IcnnParams icnn_random(const IcnnSpec& spec, Rng& rng, double a_scale) {
  IcnnParams p;
  p.spec = spec;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int out = spec.out_width(l);
    const int zin = spec.z_width(l);
    const double wsd = std::sqrt(2.0 / (spec.input_dim + out));
    p.A.emplace_back(rng.normal_mat(out, zin, a_scale).cwiseAbs());
    p.W.emplace_back(rng.normal_mat(out, spec.input_dim, wsd));
    p.b.emplace_back(Eigen::VectorXd::Zero(out));
  }
  return p;
}

IcnnVars icnn_vars(Tape& tape, const IcnnParams& p, bool trainable) {
  icnn_validate(p);
  IcnnVars v;
  v.spec = &p.spec;
  for (std::size_t l = 0; l < p.A.size(); ++l) {
    auto put = [&](const Mat& m) { return trainable ? tape.leaf(m) : tape.constant(m); };
    v.A.push_back(put(p.A[l]));
    v.W.push_back(put(p.W[l]));
    v.b.push_back(put(p.b[l]));
  }
  return v;
}

IcnnVars icnn_detach(Tape& tape, const IcnnVars& v) {
  IcnnVars out;
  out.spec = v.spec;
  for (std::size_t l = 0; l < v.A.size(); ++l) {
    out.A.push_back(tape.constant(tape.value(v.A[l])));
    out.W.push_back(tape.constant(tape.value(v.W[l])));
    out.b.push_back(tape.constant(tape.value(v.b[l])));
  }
  return out;
}

IcnnParams icnn_read(const Tape& tape, const IcnnVars& v) {
  IcnnParams p;
  p.spec = *v.spec;
  for (std::size_t l = 0; l < v.A.size(); ++l) {
    p.A.push_back(tape.value(v.A[l]));
    p.W.push_back(tape.value(v.W[l]));
    p.b.push_back(tape.value(v.b[l]));
  }
  return p;
}

Var icnn_potential(Tape& tape, const IcnnVars& v, Var X) {
  const IcnnSpec& s = *v.spec;
  const int n = static_cast<int>(tape.value(X).rows());
  if (tape.value(X).cols() != s.input_dim)
    throw ShapeError("icnn_potential: point dimension mismatch");
  Var Z = X;  // z_0 = x
  for (int l = 0; l < s.layer_count(); ++l) {
    const auto lu = static_cast<std::size_t>(l);
    Var U = matmul(Z, transpose(v.A[lu])) + matmul(X, transpose(v.W[lu])) +
            tape.broadcast_row(transpose(v.b[lu]), n);
    Z = (l + 1 < s.layer_count()) ? softplus(U) : U;
  }
  return Z + tape.half_sq_norm_rows(X);
}

Var icnn_grad(Tape& tape, const IcnnVars& v, Var X) {
  if (!tape.requires_grad(X))
    throw ShapeError("icnn_grad: X must be differentiable (use a leaf)");
  Var f = icnn_potential(tape, v, X);
  // Rows are independent, so the gradient of the batch sum is the per-row map.
  return tape.backward(sum(f), X);
}

double icnn_forward(const IcnnParams& p, const Eigen::VectorXd& x) {
  Tape tape;
  Var X = tape.constant(Mat(x.transpose()));
  Var f = icnn_potential(tape, icnn_vars(tape, p, false), X);
  return tape.value(f)(0, 0);
}

Eigen::MatrixXd transport_map_batch(const IcnnParams& p, const Eigen::MatrixXd& X) {
  Tape tape;
  Var Xv = tape.leaf(X);
  Var g = icnn_grad(tape, icnn_vars(tape, p, false), Xv);
  return tape.value(g);
}

Eigen::VectorXd transport_map(const IcnnParams& p, const Eigen::VectorXd& x) {
  return transport_map_batch(p, x.transpose()).row(0);
}

Eigen::VectorXd inverse_point(const IcnnParams& psi, const Eigen::VectorXd& y) {
  return transport_map(psi, y);
}

}  // namespace hotet
