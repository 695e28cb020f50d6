#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "hotet/rng.hpp"
#include "hotet/tape.hpp"

namespace hotet {

/// Architecture of an input-convex potential network. The network maps a
/// point in R^d to a scalar potential whose input-gradient is the transport
/// map. Hidden activations are softplus (convex, non-decreasing and twice
/// differentiable, which the alternating solver needs); the output layer is
/// affine; a fixed 0.5*||x||^2 skip term is added to the output so that a
/// network with all-zero weights is exactly the identity map.
struct IcnnSpec {
  int input_dim = 0;
  std::vector<int> hidden;  // widths of the L-1 hidden layers; final width is 1

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int out_width(int layer) const {
    return layer < static_cast<int>(hidden.size()) ? hidden[static_cast<std::size_t>(layer)] : 1;
  }
  int z_width(int layer) const {
    return layer == 0 ? input_dim : hidden[static_cast<std::size_t>(layer) - 1];
  }
  std::int64_t param_count() const;
  bool operator==(const IcnnSpec&) const = default;

  /// Benchmark-scale default: two hidden layers of width max(64, 2d).
  static IcnnSpec benchmark_default(int d) {
    const int w = std::max(64, 2 * d);
    return IcnnSpec{d, {w, w}};
  }
};

/// Concrete weights for an IcnnSpec. Per layer l: A[l] (out x z_width,
/// entries must be >= 0), W[l] (out x d, unrestricted), b[l] (out).
struct IcnnParams {
  IcnnSpec spec;
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
};

/// Throws ShapeError on malformed shapes or a negative A entry.
void icnn_validate(const IcnnParams& p);

IcnnParams icnn_zero(const IcnnSpec& spec);

/// Elementwise A := max(A, 0); W and b untouched. Idempotent.
IcnnParams project_nonneg(IcnnParams p);

/// Random initialization for directly-trained potentials: W Xavier-scaled,
/// A small nonnegative, b zero. Already satisfies the nonnegativity invariant.
IcnnParams icnn_random(const IcnnSpec& spec, Rng& rng, double a_scale = 0.05);

/// Tape-resident view of ICNN weights; entries may be leaves, constants or
/// intermediate nodes (hypernetwork outputs).
struct IcnnVars {
  const IcnnSpec* spec = nullptr;
  std::vector<ad::Var> A;
  std::vector<ad::Var> W;
  std::vector<ad::Var> b;  // stored as out x 1 columns
};

/// Put concrete params on a tape, as differentiable leaves or as constants.
IcnnVars icnn_vars(ad::Tape& tape, const IcnnParams& p, bool trainable);

/// Re-insert the current values of tape-resident params as constants
/// (stop-gradient), for the frozen side of the alternating solver.
IcnnVars icnn_detach(ad::Tape& tape, const IcnnVars& v);

/// Read tape-resident params back into concrete form.
IcnnParams icnn_read(const ad::Tape& tape, const IcnnVars& v);

/// Batched potential: X is n x d, result is n x 1. f(x) = z_L + 0.5*||x||^2.
ad::Var icnn_potential(ad::Tape& tape, const IcnnVars& v, ad::Var X);

/// Batched input-gradient of the potential: n x d. Built as ordinary tape
/// operations, so it can be differentiated further w.r.t. the weights.
/// X must be a differentiable node (a leaf or derived from one).
ad::Var icnn_grad(ad::Tape& tape, const IcnnVars& v, ad::Var X);

/// A potential is anything mapping a batch of points to per-point scalars.
using PotentialFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

inline PotentialFn icnn_potential_fn(IcnnVars v) {
  return [v](ad::Tape& tape, ad::Var X) { return icnn_potential(tape, v, X); };
}

// Eager wrappers.
double icnn_forward(const IcnnParams& p, const Eigen::VectorXd& x);
Eigen::VectorXd transport_map(const IcnnParams& p, const Eigen::VectorXd& x);
Eigen::MatrixXd transport_map_batch(const IcnnParams& p, const Eigen::MatrixXd& X);
/// Inverse map realized directly as the gradient of the second potential.
Eigen::VectorXd inverse_point(const IcnnParams& psi, const Eigen::VectorXd& y);

}  // namespace hotet
