#include "hotet/hypernet.hpp"

#include <cmath>

#include "hotet/errors.hpp"

namespace hotet {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::vector<std::pair<std::string, Eigen::MatrixXd*>> HypernetParams::tensor_refs(
    const std::string& prefix) {
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> refs;
  refs.emplace_back(prefix + "w1", &w1);
  refs.emplace_back(prefix + "b1", &b1);
  refs.emplace_back(prefix + "w2", &w2);
  refs.emplace_back(prefix + "b2", &b2);
  for (std::size_t l = 0; l < head_a.size(); ++l) {
    const std::string p = prefix + "head" + std::to_string(l) + ".";
    refs.emplace_back(p + "A.w", &head_a[l].w);
    refs.emplace_back(p + "A.b", &head_a[l].b);
    refs.emplace_back(p + "W.w", &head_w[l].w);
    refs.emplace_back(p + "W.b", &head_w[l].b);
    refs.emplace_back(p + "b.w", &head_b[l].w);
    refs.emplace_back(p + "b.b", &head_b[l].b);
  }
  return refs;
}

HypernetParams hypernet_init(const HypernetSpec& spec, Rng& rng) {
  if (spec.d_ctx < 1 || spec.hidden < 1 || spec.target.input_dim < 1)
    throw ShapeError("hypernet: bad spec");
  const double sd = std::sqrt(0.1);
  HypernetParams p;
  p.spec = spec;
  p.w1 = rng.normal_mat(spec.hidden, spec.d_ctx, sd);
  p.b1 = Mat::Zero(spec.hidden, 1);
  p.w2 = rng.normal_mat(spec.hidden, spec.hidden, sd);
  p.b2 = Mat::Zero(spec.hidden, 1);
  const IcnnSpec& t = spec.target;
  for (int l = 0; l < t.layer_count(); ++l) {
    const int out = t.out_width(l);
    auto zero_head = [&](int group) {
      return HypernetParams::Head{Mat::Zero(group, spec.hidden), Mat::Zero(group, 1)};
    };
    p.head_a.push_back(zero_head(out * t.z_width(l)));
    p.head_w.push_back(zero_head(out * t.input_dim));
    p.head_b.push_back(zero_head(out));
  }
  return p;
}

HypernetVars hypernet_vars(Tape& tape, HypernetParams& p, bool trainable) {
  HypernetVars v;
  v.spec = &p.spec;
  auto put = [&](Eigen::MatrixXd* m) {
    Var var = trainable ? tape.leaf(*m) : tape.constant(*m);
    v.all.push_back(var);
    return var;
  };
  auto refs = p.tensor_refs("");
  std::size_t i = 0;
  v.w1 = put(refs[i++].second);
  v.b1 = put(refs[i++].second);
  v.w2 = put(refs[i++].second);
  v.b2 = put(refs[i++].second);
  for (std::size_t l = 0; l < p.head_a.size(); ++l) {
    v.head_a_w.push_back(put(refs[i++].second));
    v.head_a_b.push_back(put(refs[i++].second));
    v.head_w_w.push_back(put(refs[i++].second));
    v.head_w_b.push_back(put(refs[i++].second));
    v.head_b_w.push_back(put(refs[i++].second));
    v.head_b_b.push_back(put(refs[i++].second));
  }
  return v;
}

IcnnVars hypernet_generate(Tape& tape, const HypernetVars& h, Var z) {
  const HypernetSpec& spec = *h.spec;
  if (tape.value(z).rows() != spec.d_ctx || tape.value(z).cols() != 1)
    throw ShapeError("hypernet_generate: context vector shape mismatch");
  Var h1 = relu(matmul(h.w1, z) + h.b1);
  Var h2 = relu(matmul(h.w2, h1) + h.b2);

  const IcnnSpec& t = spec.target;
  IcnnVars out;
  out.spec = &t;
  for (int l = 0; l < t.layer_count(); ++l) {
    const auto lu = static_cast<std::size_t>(l);
    Var raw_a = relu(matmul(h.head_a_w[lu], h2) + h.head_a_b[lu]);
    out.A.push_back(tape.reshape(raw_a, t.out_width(l), t.z_width(l)));
    Var raw_w = matmul(h.head_w_w[lu], h2) + h.head_w_b[lu];
    out.W.push_back(tape.reshape(raw_w, t.out_width(l), t.input_dim));
    out.b.push_back(matmul(h.head_b_w[lu], h2) + h.head_b_b[lu]);
  }
  return out;
}

IcnnParams hypernet_generate(HypernetParams& p, const Eigen::VectorXd& z) {
  Tape tape;
  HypernetVars h = hypernet_vars(tape, p, false);
  IcnnVars v = hypernet_generate(tape, h, tape.constant(Mat(z)));
  return icnn_read(tape, v);
}

}  // namespace hotet
