#include "hotet/solvers.hpp"

#include "hotet/errors.hpp"
#include "hotet/optim.hpp"

namespace hotet {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::vector<int> conjugate_argmax(const Mat& X, const Mat& Y, const Eigen::VectorXd& f_at_x) {
  if (X.rows() != Y.rows()) throw ShapeError("conjugate_argmax: batch size mismatch");
  if (f_at_x.size() != X.rows()) throw ShapeError("conjugate_argmax: potential count mismatch");
  if (!f_at_x.allFinite()) throw NumericalError("conjugate_argmax: non-finite potential values");
  const Mat inner = X * Y.transpose();  // inner(i, j) = <X_i, Y_j>
  std::vector<int> idx(static_cast<std::size_t>(Y.rows()));
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    int best = 0;
    double best_val = inner(0, j) - f_at_x(0);
    for (Eigen::Index i = 1; i < X.rows(); ++i) {
      const double v = inner(i, j) - f_at_x(i);
      if (v > best_val) {  // strict: ties keep the lowest index
        best_val = v;
        best = static_cast<int>(i);
      }
    }
    idx[static_cast<std::size_t>(j)] = best;
  }
  return idx;
}

MmbLoss mmb_loss(Tape& tape, const PotentialFn& f, const PotentialFn& g, Var X, Var Y) {
  const Mat& xv = tape.value(X);
  const Mat& yv = tape.value(Y);
  if (xv.rows() != yv.rows()) throw ShapeError("mmb_loss: paired minibatches must match");

  Var fx = f(tape, X);  // b x 1
  Var gy = g(tape, Y);
  MmbLoss out;
  out.idx_i = conjugate_argmax(xv, yv, tape.value(fx));
  out.idx_k = conjugate_argmax(yv, xv, tape.value(gy));
  out.f_term = mean(fx) - mean(tape.gather_rows(fx, out.idx_i));
  out.g_term = mean(gy) - mean(tape.gather_rows(gy, out.idx_k));
  out.total = out.f_term + out.g_term;
  return out;
}

MmbLoss mmb_loss(Tape& tape, const IcnnParams& f, const IcnnParams& g, const Mat& X,
                 const Mat& Y) {
  IcnnVars fv = icnn_vars(tape, f, true);
  IcnnVars gv = icnn_vars(tape, g, true);
  return mmb_loss(tape, icnn_potential_fn(fv), icnn_potential_fn(gv), tape.constant(X),
                  tape.constant(Y));
}

Var mmv2_inner_loss(Tape& tape, const PotentialFn& g, const PotentialFn& f_frozen,
                    const Mat& Y) {
  Var Yl = tape.leaf(Y);
  Var gy = g(tape, Yl);
  Var G = tape.backward(sum(gy), Yl);  // b x d, still differentiable in g's weights
  Var corr = mean(row_sum(G * Yl));
  return corr - mean(f_frozen(tape, G));
}

Var mmv2_inner_loss(Tape& tape, const IcnnParams& g, const IcnnParams& f_frozen, const Mat& Y) {
  IcnnVars gv = icnn_vars(tape, g, true);
  IcnnVars fv = icnn_vars(tape, f_frozen, false);  // constants: nothing flows to f
  return mmv2_inner_loss(tape, icnn_potential_fn(gv), icnn_potential_fn(fv), Y);
}

Var mmv2_outer_loss(Tape& tape, const PotentialFn& f, const Mat& grad_g_at_y, Var X) {
  Var G = tape.constant(grad_g_at_y);
  return mean(f(tape, X)) - mean(f(tape, G));
}

Var mmv2_outer_loss(Tape& tape, const IcnnParams& f, const IcnnParams& g_frozen, const Mat& X,
                    const Mat& Y) {
  const Mat pushed = transport_map_batch(g_frozen, Y);
  IcnnVars fv = icnn_vars(tape, f, true);
  return mmv2_outer_loss(tape, icnn_potential_fn(fv), pushed, tape.constant(X));
}

double dual_objective_estimate(const IcnnParams& f, const Mat& X, const Mat& Y) {
  Tape tape;
  Var fx = icnn_potential(tape, icnn_vars(tape, f, false), tape.constant(X));
  const Eigen::VectorXd fv = tape.value(fx);
  const std::vector<int> idx = conjugate_argmax(X, Y, fv);
  const double b = static_cast<double>(Y.rows());
  double est = fv.mean();
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    const int i = idx[static_cast<std::size_t>(j)];
    est += (X.row(i).dot(Y.row(j)) - fv(i)) / b;
  }
  return est;
}

namespace {

// A, W and b references in one stable order; biases are promoted to
// one-column matrices in a side store so Adam addresses uniform types.
struct IcnnAdamView {
  std::vector<Mat> bias;

  std::vector<Mat*> ptrs(IcnnParams& p) {
    std::vector<Mat*> out;
    for (auto& a : p.A) out.push_back(&a);
    for (auto& w : p.W) out.push_back(&w);
    if (bias.size() != p.b.size()) bias.resize(p.b.size());
    for (std::size_t i = 0; i < p.b.size(); ++i) {
      bias[i] = p.b[i];
      out.push_back(&bias[i]);
    }
    return out;
  }
  void write_back(IcnnParams& p) const {
    for (std::size_t i = 0; i < p.b.size(); ++i) p.b[i] = bias[i];
  }
};

std::vector<Mat> icnn_grads(Tape& tape, const IcnnVars& v, Var loss) {
  std::vector<Var> wrt;
  for (auto a : v.A) wrt.push_back(a);
  for (auto w : v.W) wrt.push_back(w);
  for (auto b : v.b) wrt.push_back(b);
  std::vector<Var> gs = tape.backward(loss, wrt);
  std::vector<Mat> out;
  out.reserve(gs.size());
  for (Var gv : gs) out.push_back(tape.value(gv));
  return out;
}

}  // namespace

RawTrainResult train_raw(IcnnParams& f, IcnnParams& g, const BatchSampler& sample_mu,
                         const BatchSampler& sample_nu, int iterations, const SolverConfig& cfg,
                         std::uint64_t seed) {
  RawTrainResult result;
  Rng rng(Rng::derive(seed, "raw_train"));
  Adam opt_f(cfg.lr), opt_g(cfg.lr);
  IcnnAdamView view_f, view_g;

  try {
    for (int it = 0; it < iterations; ++it) {
      if (cfg.kind == SolverKind::kMmb) {
        const Mat X = sample_mu(cfg.batch, rng);
        const Mat Y = sample_nu(cfg.batch, rng);
        Tape tape;
        IcnnVars fv = icnn_vars(tape, f, true);
        IcnnVars gv = icnn_vars(tape, g, true);
        MmbLoss loss = mmb_loss(tape, icnn_potential_fn(fv), icnn_potential_fn(gv),
                                tape.constant(X), tape.constant(Y));
        result.loss_trace.push_back(tape.scalar_value(loss.total));
        std::vector<Mat> grad_f = icnn_grads(tape, fv, loss.total);
        std::vector<Mat> grad_g = icnn_grads(tape, gv, loss.total);
        opt_f.step(view_f.ptrs(f), grad_f);
        view_f.write_back(f);
        opt_g.step(view_g.ptrs(g), grad_g);
        view_g.write_back(g);
        f = project_nonneg(std::move(f));
        g = project_nonneg(std::move(g));
      } else {
        for (int k = 0; k < cfg.inner_iters; ++k) {
          const Mat Y = sample_nu(cfg.batch, rng);
          Tape tape;
          IcnnVars gv = icnn_vars(tape, g, true);
          IcnnVars fv = icnn_vars(tape, f, false);
          Var inner = mmv2_inner_loss(tape, icnn_potential_fn(gv), icnn_potential_fn(fv), Y);
          std::vector<Mat> grad_g = icnn_grads(tape, gv, inner);
          for (auto& m : grad_g) m = -m;  // gradient ascent on the inner objective
          opt_g.step(view_g.ptrs(g), grad_g);
          view_g.write_back(g);
          g = project_nonneg(std::move(g));
        }
        const Mat X = sample_mu(cfg.batch, rng);
        const Mat Y = sample_nu(cfg.batch, rng);
        Tape tape;
        IcnnVars fv = icnn_vars(tape, f, true);
        Var outer = mmv2_outer_loss(tape, icnn_potential_fn(fv), transport_map_batch(g, Y),
                                    tape.constant(X));
        result.loss_trace.push_back(tape.scalar_value(outer));
        std::vector<Mat> grad_f = icnn_grads(tape, fv, outer);
        opt_f.step(view_f.ptrs(f), grad_f);
        view_f.write_back(f);
        f = project_nonneg(std::move(f));
      }
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.diagnostic = e.what();
  }
  return result;
}

}  // namespace hotet
