#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "hotet/icnn.hpp"
#include "hotet/tape.hpp"

namespace hotet {

enum class SolverKind { kMmb, kMmv2 };

struct SolverConfig {
  SolverKind kind = SolverKind::kMmb;
  int batch = 1024;
  int inner_iters = 5;  // MMv2 inner maximization steps per outer step
  double lr = 1e-3;
};

/// Conjugate selection i(j) = argmax_i <X_i, Y_j> - f(X_i); ties take the
/// lowest index. The indices are frozen for differentiation (envelope rule).
std::vector<int> conjugate_argmax(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                  const Eigen::VectorXd& f_at_x);

/// Minibatch-conjugate loss, symmetrized over both potentials:
/// L = mean_j[f(X_j) - f(X_{i(j)})] + mean_j[g(Y_j) - g(Y_{k(j)})].
struct MmbLoss {
  ad::Var total;
  ad::Var f_term;
  ad::Var g_term;
  std::vector<int> idx_i;  // selection against f, one per Y row
  std::vector<int> idx_k;  // selection against g, one per X row
};
MmbLoss mmb_loss(ad::Tape& tape, const PotentialFn& f, const PotentialFn& g, ad::Var X,
                 ad::Var Y);
MmbLoss mmb_loss(ad::Tape& tape, const IcnnParams& f, const IcnnParams& g,
                 const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Inner objective of the alternating solver, to be maximized in g:
/// mean_i[<grad g(Y_i), Y_i> - f(grad g(Y_i))], with f frozen. The gradient
/// of g is built on the tape so the result is differentiable in g's weights.
ad::Var mmv2_inner_loss(ad::Tape& tape, const PotentialFn& g, const PotentialFn& f_frozen,
                        const Eigen::MatrixXd& Y);
ad::Var mmv2_inner_loss(ad::Tape& tape, const IcnnParams& g, const IcnnParams& f_frozen,
                        const Eigen::MatrixXd& Y);

/// Outer objective, to be minimized in f: mean_i[f(X_i) - f(grad g(Y_i))]
/// with g frozen (its pushforward enters as plain data).
ad::Var mmv2_outer_loss(ad::Tape& tape, const PotentialFn& f,
                        const Eigen::MatrixXd& grad_g_at_y, ad::Var X);
ad::Var mmv2_outer_loss(ad::Tape& tape, const IcnnParams& f, const IcnnParams& g_frozen,
                        const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Minibatch estimate of the correlation-form dual objective,
/// mean_j f(X_j) + mean_j[<X_{i(j)}, Y_j> - f(X_{i(j)})]. Decreases toward
/// E||x||^2/2 + E||y||^2/2 - W2^2/2 as f approaches the optimal potential.
double dual_objective_estimate(const IcnnParams& f, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y);

/// Direct (non-hypernetwork) training of a potential pair on sample batches.
using BatchSampler = std::function<Eigen::MatrixXd(int, Rng&)>;

struct RawTrainResult {
  std::vector<double> loss_trace;
  bool diverged = false;
  std::string diagnostic;
};

RawTrainResult train_raw(IcnnParams& f, IcnnParams& g, const BatchSampler& sample_mu,
                         const BatchSampler& sample_nu, int iterations,
                         const SolverConfig& cfg, std::uint64_t seed);

}  // namespace hotet
