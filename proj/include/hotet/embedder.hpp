#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hotet/distribution.hpp"
#include "hotet/tape.hpp"

namespace hotet {

/// Set transformer over weighted point clouds. No positional encoding; the
/// blocks are pre-norm attention + FFN with residuals. The final block's FFN
/// lifts the width to the context dimension (no residual there, the widths
/// differ) and the output matrix is pooled with the sample weights.
struct TransformerSpec {
  int input_dim = 0;
  int blocks = 3;
  int heads = 4;
  int head_dim = 16;
  int d_ctx = 128;
  int ffn_hidden = 128;

  int model_dim() const { return heads * head_dim; }
  bool operator==(const TransformerSpec&) const = default;
};

struct TransformerParams {
  struct Block {
    Eigen::MatrixXd wq, bq, wk, bk, wv, bv, wo, bo;  // biases are 1 x width
    Eigen::MatrixXd wf1, bf1, wf2, bf2;
  };
  TransformerSpec spec;
  Eigen::MatrixXd w_in, b_in;  // input lift d -> model_dim
  std::vector<Block> blocks;

  /// Stable (name, tensor) enumeration used for leaves, Adam and checkpoints.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_refs();
};

TransformerParams transformer_init(const TransformerSpec& spec, Rng& rng);

struct TransformerVars {
  struct Block {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo, wf1, bf1, wf2, bf2;
  };
  const TransformerSpec* spec = nullptr;
  ad::Var w_in, b_in;
  std::vector<Block> blocks;
  std::vector<ad::Var> all;  // same order as tensor_refs()
};

TransformerVars transformer_vars(ad::Tape& tape, TransformerParams& p, bool trainable);

/// Row-wise layer normalization (no affine part; the adjacent projections
/// absorb scale and shift).
ad::Var layernorm_rows(ad::Tape& tape, ad::Var X);

/// Per-key logit shifts encoding the sample weights: ln(n * m_j), with
/// weight-zero atoms masked out entirely (the exact limit of the formula).
Eigen::VectorXd weight_logits(const Eigen::VectorXd& weights);

/// Weighted multi-head attention core on an already-normalized input:
/// softmax(Q K^T / sqrt(p) + shift) V per head, concatenated, then the
/// output projection. X is n x model_dim.
ad::Var weighted_attention(ad::Tape& tape, const TransformerSpec& spec,
                           const TransformerVars::Block& blk, ad::Var X,
                           const Eigen::VectorXd& weights);

/// One full block: pre-norm attention with residual, then pre-norm FFN with
/// residual. With `lift_final` the FFN outputs d_ctx and drops the residual.
ad::Var attention_block(ad::Tape& tape, const TransformerSpec& spec,
                        const TransformerVars::Block& blk, ad::Var X,
                        const Eigen::VectorXd& weights, bool lift_final);

/// Full embedding graph: returns the context vector as d_ctx x 1.
ad::Var embed_graph(ad::Tape& tape, const TransformerVars& vars,
                    const EmpiricalDistribution& dist);

/// Eager embedding of a distribution.
Eigen::VectorXd embed(TransformerParams& params, const EmpiricalDistribution& dist);

}  // namespace hotet
