#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "hotet/distribution.hpp"
#include "hotet/icnn.hpp"
#include "hotet/rng.hpp"

namespace hotet {

struct GaussianMixture {
  Eigen::MatrixXd means;                // k x d
  std::vector<Eigen::MatrixXd> covs;    // k SPD matrices
  Eigen::VectorXd weights;              // simplex

  int dim() const { return static_cast<int>(means.cols()); }
  int components() const { return static_cast<int>(means.rows()); }
  void validate() const;
  Eigen::MatrixXd sample(Eigen::Index n, Rng& rng) const;
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;

  static GaussianMixture single(Eigen::VectorXd mean, Eigen::MatrixXd cov);
};

/// Three components by default; means uniform in [-4,4]^d, covariances
/// G G^T / d + 0.1 I, weights uniform-Dirichlet.
GaussianMixture random_mixture(int d, Rng& rng, int components = 3);

/// n i.i.d. draws with uniform weights 1/n.
EmpiricalDistribution sample_distribution(const GaussianMixture& gm, Eigen::Index n,
                                          std::uint64_t seed);

/// Closed-form OT map between Gaussians: T(x) = c + A (x - 0), with
/// A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2} and c = m2 - A m1.
struct LinearMap {
  Eigen::MatrixXd A;
  Eigen::VectorXd c;
};
LinearMap gaussian_ot_map(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                          const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2);

/// A (mu, nu) pair whose optimal map is known exactly. Either a linear
/// Gaussian-to-Gaussian map in closed form, or a Brenier construction where
/// one side is pushed through the gradient of a frozen convex potential, so
/// the map is known in closed form one way and by pushforward bookkeeping
/// the other way.
struct GroundTruthPair {
  enum class Kind { kLinear, kBrenierFwd, kBrenierInv };
  // kLinear:     mu = base, nu = T_# mu with T(x) = A x + c.
  // kBrenierFwd: mu = base, nu = (grad u)_# mu.
  // kBrenierInv: nu = base, mu = (grad u)_# nu (the multi-source protocol:
  //              many mu_i against one shared reference nu).
  Kind kind = Kind::kLinear;
  int d = 0;
  GaussianMixture base;
  LinearMap lin;       // kLinear only
  IcnnParams potential;  // Brenier kinds only

  /// X ~ mu together with the exact forward images T*(X).
  void sample_fwd(Eigen::Index n, std::uint64_t seed, Eigen::MatrixXd& X,
                  Eigen::MatrixXd& TX) const;
  /// Y ~ nu together with the exact inverse images (T*)^{-1}(Y).
  void sample_inv(Eigen::Index n, std::uint64_t seed, Eigen::MatrixXd& Y,
                  Eigen::MatrixXd& TinvY) const;
  Eigen::MatrixXd sample_mu(Eigen::Index n, std::uint64_t seed) const;
  Eigen::MatrixXd sample_nu(Eigen::Index n, std::uint64_t seed) const;

  /// Total variance (trace of covariance); exact for the linear kind,
  /// Monte-Carlo on n samples otherwise.
  double var_nu(Eigen::Index n, std::uint64_t seed) const;
  double var_mu(Eigen::Index n, std::uint64_t seed) const;

  /// The same pair with the roles of mu and nu exchanged (for evaluating
  /// inverse maps with the forward-map metrics).
  GroundTruthPair swapped() const;
};

GroundTruthPair make_pair_linear(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                                 const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2);
GroundTruthPair make_pair_brenier(GaussianMixture mu, IcnnParams convex_potential);
GroundTruthPair make_pair_brenier_inv(GaussianMixture nu, IcnnParams convex_potential);

/// Frozen random convex potential for Brenier constructions. `scale`
/// controls the displacement magnitude of grad u away from the identity.
IcnnParams random_convex_potential(int d, Rng& rng, double scale = 1.0);

using MapFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

inline MapFn icnn_map_fn(IcnnParams p) {
  return [p = std::move(p)](const Eigen::MatrixXd& X) { return transport_map_batch(p, X); };
}

/// 100 * ||T - T*||^2_{L2(mu)} / Var(nu), Monte-Carlo on n_eval fresh samples.
double l2_uvp(const MapFn& T, const GroundTruthPair& pair, Eigen::Index n_eval,
              std::uint64_t seed);

/// Cosine of the angle between the displacement fields T - id and T* - id
/// in L2(mu). Zero when either field vanishes.
double cos_sim(const MapFn& T, const GroundTruthPair& pair, Eigen::Index n_eval,
               std::uint64_t seed);

struct EvalReport {
  double uvp_fwd = 0.0, uvp_inv = 0.0;
  double cs_fwd = 0.0, cs_inv = 0.0;
  Eigen::Index n_eval = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

EvalReport evaluate_pair(const IcnnParams& fwd, const IcnnParams& inv,
                         const GroundTruthPair& pair, Eigen::Index n_eval, std::uint64_t seed);

/// Exact solution of the discrete OT problem on equal-size uniform samples:
/// the permutation minimizing the mean squared distance, found by a dense
/// Hungarian assignment (exactness over speed; n <= 512).
struct DiscreteOtResult {
  std::vector<int> assignment;  // row i of X -> assignment[i] of Y
  double mean_cost = 0.0;       // empirical W2^2
};
DiscreteOtResult discrete_ot_oracle(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Dense minimum-cost assignment (Hungarian with dual potentials, O(n^3)).
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

}  // namespace hotet
