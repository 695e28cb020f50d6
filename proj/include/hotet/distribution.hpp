#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "hotet/rng.hpp"

namespace hotet {

/// A weighted empirical distribution: n atoms in R^d with weights on the
/// probability simplex (sum 1 within 1e-9, each weight >= 0, n >= 1).
struct EmpiricalDistribution {
  Eigen::MatrixXd points;   // n x d
  Eigen::VectorXd weights;  // n

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  /// Throws ShapeError / NumericalError if the invariants are violated.
  void validate() const;

  static EmpiricalDistribution uniform(Eigen::MatrixXd pts);

  /// Draw n atoms i.i.d. according to the weights (with replacement).
  Eigen::MatrixXd sample(Eigen::Index n, Rng& rng) const;
};

/// Text format: header line "n d", then n rows of d coordinates with an
/// optional trailing weight column (uniform when absent).
EmpiricalDistribution read_distribution(std::istream& in);
EmpiricalDistribution read_distribution_file(const std::string& path);
void write_distribution(std::ostream& out, const EmpiricalDistribution& d, bool with_weights);

}  // namespace hotet
