#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hotet/icnn.hpp"
#include "hotet/rng.hpp"
#include "hotet/tape.hpp"

namespace hotet {

/// MLP mapping a context vector to a complete set of ICNN weights. One
/// output head per parameter group (each A_l, W_l, b_l), so the
/// nonnegativity clamp touches only the z-path weights.
struct HypernetSpec {
  int d_ctx = 128;
  int hidden = 256;
  IcnnSpec target;
  bool operator==(const HypernetSpec&) const = default;
};

struct HypernetParams {
  struct Head {
    Eigen::MatrixXd w;  // group_size x hidden
    Eigen::MatrixXd b;  // group_size x 1
  };
  HypernetSpec spec;
  Eigen::MatrixXd w1, b1;  // hidden x d_ctx, hidden x 1
  Eigen::MatrixXd w2, b2;  // hidden x hidden, hidden x 1
  std::vector<Head> head_a, head_w, head_b;  // one per target layer

  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_refs(const std::string& prefix);
};

/// Hidden weights ~ N(0, variance 0.1); all biases and the output heads
/// start at zero, so a fresh pipeline generates the all-zero ICNN and the
/// transport map starts as the exact identity (the quadratic skip).
HypernetParams hypernet_init(const HypernetSpec& spec, Rng& rng);

struct HypernetVars {
  const HypernetSpec* spec = nullptr;
  ad::Var w1, b1, w2, b2;
  std::vector<ad::Var> head_a_w, head_a_b, head_w_w, head_w_b, head_b_w, head_b_b;
  std::vector<ad::Var> all;  // same order as tensor_refs()
};

HypernetVars hypernet_vars(ad::Tape& tape, HypernetParams& p, bool trainable);

/// Generate ICNN weights from a context vector (d_ctx x 1 node). The A
/// groups pass through a ReLU clamp, so the result always satisfies the
/// ICNN nonnegativity invariant.
IcnnVars hypernet_generate(ad::Tape& tape, const HypernetVars& h, ad::Var z);

/// Eager variant.
IcnnParams hypernet_generate(HypernetParams& p, const Eigen::VectorXd& z);

}  // namespace hotet
