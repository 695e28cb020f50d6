#include "hotet/embedder.hpp"

#include <cmath>
#include <limits>

#include "hotet/errors.hpp"

namespace hotet {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::vector<std::pair<std::string, Eigen::MatrixXd*>> TransformerParams::tensor_refs() {
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> refs;
  refs.emplace_back("emb.w_in", &w_in);
  refs.emplace_back("emb.b_in", &b_in);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "emb.b" + std::to_string(l) + ".";
    Block& b = blocks[l];
    refs.emplace_back(p + "wq", &b.wq);
    refs.emplace_back(p + "bq", &b.bq);
    refs.emplace_back(p + "wk", &b.wk);
    refs.emplace_back(p + "bk", &b.bk);
    refs.emplace_back(p + "wv", &b.wv);
    refs.emplace_back(p + "bv", &b.bv);
    refs.emplace_back(p + "wo", &b.wo);
    refs.emplace_back(p + "bo", &b.bo);
    refs.emplace_back(p + "wf1", &b.wf1);
    refs.emplace_back(p + "bf1", &b.bf1);
    refs.emplace_back(p + "wf2", &b.wf2);
    refs.emplace_back(p + "bf2", &b.bf2);
  }
  return refs;
}

namespace {

Mat xavier(Rng& rng, int rows, int cols) {
  return rng.normal_mat(rows, cols, std::sqrt(2.0 / (rows + cols)));
}

}  // namespace

TransformerParams transformer_init(const TransformerSpec& spec, Rng& rng) {
  if (spec.input_dim < 1 || spec.blocks < 1 || spec.heads < 1 || spec.head_dim < 1 ||
      spec.d_ctx < 1 || spec.ffn_hidden < 1)
    throw ShapeError("transformer: bad spec");
  TransformerParams p;
  p.spec = spec;
  const int d = spec.model_dim();
  p.w_in = xavier(rng, spec.input_dim, d);
  p.b_in = Mat::Zero(1, d);
  for (int l = 0; l < spec.blocks; ++l) {
    TransformerParams::Block b;
    b.wq = xavier(rng, d, d);
    b.bq = Mat::Zero(1, d);
    b.wk = xavier(rng, d, d);
    b.bk = Mat::Zero(1, d);
    b.wv = xavier(rng, d, d);
    b.bv = Mat::Zero(1, d);
    b.wo = xavier(rng, d, d);
    b.bo = Mat::Zero(1, d);
    const int out = (l + 1 == spec.blocks) ? spec.d_ctx : d;
    b.wf1 = xavier(rng, d, spec.ffn_hidden);
    b.bf1 = Mat::Zero(1, spec.ffn_hidden);
    b.wf2 = xavier(rng, spec.ffn_hidden, out);
    b.bf2 = Mat::Zero(1, out);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

TransformerVars transformer_vars(Tape& tape, TransformerParams& p, bool trainable) {
  TransformerVars v;
  v.spec = &p.spec;
  auto put = [&](Eigen::MatrixXd* m) {
    Var var = trainable ? tape.leaf(*m) : tape.constant(*m);
    v.all.push_back(var);
    return var;
  };
  auto refs = p.tensor_refs();
  std::size_t i = 0;
  v.w_in = put(refs[i++].second);
  v.b_in = put(refs[i++].second);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    TransformerVars::Block b;
    b.wq = put(refs[i++].second);
    b.bq = put(refs[i++].second);
    b.wk = put(refs[i++].second);
    b.bk = put(refs[i++].second);
    b.wv = put(refs[i++].second);
    b.bv = put(refs[i++].second);
    b.wo = put(refs[i++].second);
    b.bo = put(refs[i++].second);
    b.wf1 = put(refs[i++].second);
    b.bf1 = put(refs[i++].second);
    b.wf2 = put(refs[i++].second);
    b.bf2 = put(refs[i++].second);
    v.blocks.push_back(b);
  }
  return v;
}

Var layernorm_rows(Tape& tape, Var X) {
  const int c = static_cast<int>(tape.value(X).cols());
  const double inv = 1.0 / static_cast<double>(c);
  Var mu = tape.scale(tape.row_sum(X), inv);
  Var centered = X - tape.broadcast_col(mu, c);
  Var var = tape.scale(tape.row_sum(centered * centered), inv);
  Var r = tape.rsqrt(var, 1e-5);
  return centered * tape.broadcast_col(r, c);
}

Eigen::VectorXd weight_logits(const Eigen::VectorXd& weights) {
  const auto n = static_cast<double>(weights.size());
  Eigen::VectorXd shift(weights.size());
  for (Eigen::Index j = 0; j < weights.size(); ++j)
    shift(j) = weights(j) > 0.0 ? std::log(n * weights(j))
                                : -std::numeric_limits<double>::infinity();
  return shift;
}

Var weighted_attention(Tape& tape, const TransformerSpec& spec,
                       const TransformerVars::Block& blk, Var X,
                       const Eigen::VectorXd& weights) {
  const int n = static_cast<int>(tape.value(X).rows());
  if (weights.size() != n) throw ShapeError("attention: weight count mismatch");
  if ((weights.array() < 0.0).any()) throw ShapeError("attention: negative weight");
  if (weights.maxCoeff() <= 0.0) throw ShapeError("attention: all weights are zero");

  const Eigen::VectorXd shift = weight_logits(weights);
  Var Q = matmul(X, blk.wq) + tape.broadcast_row(blk.bq, n);
  Var K = matmul(X, blk.wk) + tape.broadcast_row(blk.bk, n);
  Var V = matmul(X, blk.wv) + tape.broadcast_row(blk.bv, n);

  const int p = spec.head_dim;
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(spec.heads));
  for (int h = 0; h < spec.heads; ++h) {
    Var Qh = tape.slice_cols(Q, h * p, p);
    Var Kh = tape.slice_cols(K, h * p, p);
    Var Vh = tape.slice_cols(V, h * p, p);
    Var logits = tape.scale(matmul(Qh, transpose(Kh)), inv_sqrt_p);
    Var S = tape.softmax_rows_shifted(logits, shift);
    heads.push_back(matmul(S, Vh));
  }
  Var concat = spec.heads == 1 ? heads[0] : tape.concat_cols(heads);
  return matmul(concat, blk.wo) + tape.broadcast_row(blk.bo, n);
}

Var attention_block(Tape& tape, const TransformerSpec& spec,
                    const TransformerVars::Block& blk, Var X,
                    const Eigen::VectorXd& weights, bool lift_final) {
  const int n = static_cast<int>(tape.value(X).rows());
  Var attn = weighted_attention(tape, spec, blk, layernorm_rows(tape, X), weights);
  Var X1 = X + attn;
  Var H = relu(matmul(layernorm_rows(tape, X1), blk.wf1) + tape.broadcast_row(blk.bf1, n));
  Var F = matmul(H, blk.wf2) + tape.broadcast_row(blk.bf2, n);
  return lift_final ? F : X1 + F;
}

Var embed_graph(Tape& tape, const TransformerVars& vars, const EmpiricalDistribution& dist) {
  dist.validate();
  const TransformerSpec& spec = *vars.spec;
  if (dist.dim() != spec.input_dim) throw ShapeError("embed: point dimension mismatch");
  const int n = static_cast<int>(dist.size());

  Var X0 = tape.constant(dist.points);
  Var X = matmul(X0, vars.w_in) + tape.broadcast_row(vars.b_in, n);
  for (int l = 0; l < spec.blocks; ++l) {
    const bool last = (l + 1 == spec.blocks);
    X = attention_block(tape, spec, vars.blocks[static_cast<std::size_t>(l)], X, dist.weights,
                        last);
  }
  Var m = tape.constant(Mat(dist.weights));
  return matmul(transpose(X), m);  // d_ctx x 1 weighted pooling
}

Eigen::VectorXd embed(TransformerParams& params, const EmpiricalDistribution& dist) {
  Tape tape;
  TransformerVars vars = transformer_vars(tape, params, false);
  Var z = embed_graph(tape, vars, dist);
  return tape.value(z);
}

}  // namespace hotet
