#include "hotet/trainer.hpp"

#include <algorithm>

#include "hotet/errors.hpp"
#include "hotet/optim.hpp"

namespace hotet {

using ad::Mat;
using ad::Tape;
using ad::Var;

std::vector<std::pair<std::string, Eigen::MatrixXd*>> HotetModel::embedder_refs() {
  if (ablated) return {{"ctx", &const_ctx}};
  return embedder.tensor_refs();
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> HotetModel::fwd_refs() {
  return hyper_fwd.tensor_refs("hf.");
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> HotetModel::inv_refs() {
  return hyper_inv.tensor_refs("hg.");
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> HotetModel::tensor_refs() {
  auto refs = embedder_refs();
  for (auto& r : fwd_refs()) refs.push_back(r);
  for (auto& r : inv_refs()) refs.push_back(r);
  return refs;
}

HotetModel hotet_init(int input_dim, std::uint64_t seed, const IcnnSpec* icnn,
                      const TransformerSpec* tf, int hyper_hidden) {
  HotetModel m;
  m.icnn_spec = icnn ? *icnn : IcnnSpec::benchmark_default(input_dim);
  if (m.icnn_spec.input_dim != input_dim) throw ShapeError("hotet_init: ICNN dimension mismatch");
  if (tf) {
    m.tspec = *tf;
    m.tspec.input_dim = input_dim;
  } else {
    m.tspec = TransformerSpec{};
    m.tspec.input_dim = input_dim;
  }
  m.hspec = HypernetSpec{m.tspec.d_ctx, hyper_hidden, m.icnn_spec};
  Rng emb_rng(Rng::derive(seed, "emb_init"));
  Rng hf_rng(Rng::derive(seed, "hf_init"));
  Rng hg_rng(Rng::derive(seed, "hg_init"));
  m.embedder = transformer_init(m.tspec, emb_rng);
  m.hyper_fwd = hypernet_init(m.hspec, hf_rng);
  m.hyper_inv = hypernet_init(m.hspec, hg_rng);
  m.const_ctx = Mat::Zero(m.tspec.d_ctx, 1);
  return m;
}

HotetModel ablate_embedding(const HotetModel& model, std::uint64_t seed) {
  HotetModel m = model;
  m.ablated = true;
  Rng rng(Rng::derive(seed, "ablate_ctx"));
  m.const_ctx = rng.normal_mat(m.tspec.d_ctx, 1);
  return m;
}

namespace {

struct ModelVars {
  TransformerVars emb;
  Var ctx;
  HypernetVars hf, hg;
};

ModelVars model_vars(Tape& tape, HotetModel& m, bool train_emb, bool train_f, bool train_g) {
  ModelVars v;
  if (m.ablated) {
    v.ctx = train_emb ? tape.leaf(m.const_ctx) : tape.constant(m.const_ctx);
  } else {
    v.emb = transformer_vars(tape, m.embedder, train_emb);
  }
  v.hf = hypernet_vars(tape, m.hyper_fwd, train_f);
  v.hg = hypernet_vars(tape, m.hyper_inv, train_g);
  return v;
}

/// Context vector for a sample batch (uniform weights), or the constant
/// context in the ablated variant.
Var context_of(Tape& tape, HotetModel& m, const ModelVars& v, const Mat& batch) {
  if (m.ablated) return v.ctx;
  return embed_graph(tape, v.emb, EmpiricalDistribution::uniform(batch));
}

std::vector<Mat> grads_of(Tape& tape, const std::vector<Var>& vars, Var loss) {
  std::vector<Var> gs = tape.backward(loss, vars);
  std::vector<Mat> out;
  out.reserve(gs.size());
  for (Var g : gs) out.push_back(tape.value(g));
  return out;
}

std::vector<Var> emb_vars_of(const HotetModel& m, const ModelVars& v) {
  if (m.ablated) return {v.ctx};
  return v.emb.all;
}

std::vector<Mat*> ref_ptrs(std::vector<std::pair<std::string, Mat*>> refs) {
  std::vector<Mat*> out;
  out.reserve(refs.size());
  for (auto& [name, ptr] : refs) out.push_back(ptr);
  return out;
}

/// Draws epoch-shuffled distribution indices, refilling without replacement.
class EpochSampler {
 public:
  EpochSampler(int n, Rng& rng) : n_(n), rng_(rng) {}
  int next() {
    if (queue_.empty()) {
      queue_.resize(static_cast<std::size_t>(n_));
      for (int i = 0; i < n_; ++i) queue_[static_cast<std::size_t>(i)] = i;
      rng_.shuffle(queue_);
    }
    const int i = queue_.back();
    queue_.pop_back();
    return i;
  }

 private:
  int n_;
  Rng& rng_;
  std::vector<int> queue_;
};

struct PairBatch {
  int pair_id = 0;
  Mat x, y;
};

/// Shared loop body for pair and multi mode. `draw` produces the per-pair
/// minibatches of one iteration.
TrainResult run_training(HotetModel& model, const TrainConfig& cfg,
                         const std::function<std::vector<PairBatch>(int, Rng&)>& draw) {
  TrainResult result;
  Rng data_rng(Rng::derive(cfg.seed, "train_data"));
  Adam opt_emb(cfg.solver.lr), opt_f(cfg.solver.lr), opt_g(cfg.solver.lr);

  try {
    for (int it = 0; it < cfg.iterations; ++it) {
      std::vector<PairBatch> batch = draw(it, data_rng);
      const double inv_2b = 1.0 / (2.0 * static_cast<double>(batch.size()));

      if (cfg.solver.kind == SolverKind::kMmb) {
        Tape tape;
        ModelVars v = model_vars(tape, model, true, true, true);
        Var total;
        for (const PairBatch& pb : batch) {
          Var zx = context_of(tape, model, v, pb.x);
          IcnnVars theta = hypernet_generate(tape, v.hf, zx);
          // Pair mode embeds the target batch for omega; multi mode reuses
          // the source embedding for both maps.
          Var zy = (model.trained_mode == TrainMode::kMulti)
                       ? zx
                       : context_of(tape, model, v, pb.y);
          IcnnVars omega = hypernet_generate(tape, v.hg, zy);
          MmbLoss parts = mmb_loss(tape, icnn_potential_fn(theta), icnn_potential_fn(omega),
                                   tape.constant(pb.x), tape.constant(pb.y));
          Var contrib = tape.scale(parts.f_term + parts.g_term, inv_2b);
          total = total.valid() ? total + contrib : contrib;
          result.trace.push_back({it, pb.pair_id, tape.scalar_value(parts.f_term),
                                  tape.scalar_value(parts.g_term)});
        }
        if (!std::isfinite(tape.scalar_value(total)))
          throw NumericalError("train: non-finite loss");
        opt_emb.step(ref_ptrs(model.embedder_refs()),
                     grads_of(tape, emb_vars_of(model, v), total));
        opt_f.step(ref_ptrs(model.fwd_refs()), grads_of(tape, v.hf.all, total));
        opt_g.step(ref_ptrs(model.inv_refs()), grads_of(tape, v.hg.all, total));
      } else {
        // MMv2. The embeddings and the frozen forward potentials are fixed
        // at the start of the iteration; the inner phase maximizes the
        // conjugate objective in G only, then the outer phase minimizes in
        // E and F with G frozen.
        std::vector<Eigen::VectorXd> z_cached;
        std::vector<IcnnParams> f_frozen;
        for (const PairBatch& pb : batch) {
          Tape tape;
          ModelVars v = model_vars(tape, model, false, false, false);
          Var z = context_of(tape, model, v, pb.x);
          z_cached.push_back(tape.value(z));
          f_frozen.push_back(icnn_read(tape, hypernet_generate(tape, v.hf, z)));
        }

        std::vector<double> last_inner(batch.size(), 0.0);
        for (int k = 0; k < cfg.solver.inner_iters; ++k) {
          Tape tape;
          ModelVars v = model_vars(tape, model, false, false, true);
          Var total;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            const Mat yk = (k == 0) ? batch[i].y
                                    : draw_like(batch[i].y, data_rng);
            IcnnVars omega =
                hypernet_generate(tape, v.hg, tape.constant(Mat(z_cached[i])));
            IcnnVars fcon = icnn_vars(tape, f_frozen[i], false);
            Var inner = mmv2_inner_loss(tape, icnn_potential_fn(omega),
                                        icnn_potential_fn(fcon), yk);
            last_inner[i] = tape.scalar_value(inner);
            Var contrib = tape.scale(inner, 1.0 / static_cast<double>(batch.size()));
            total = total.valid() ? total + contrib : contrib;
          }
          std::vector<Mat> gg = grads_of(tape, v.hg.all, total);
          for (auto& m : gg) m = -m;  // ascend
          opt_g.step(ref_ptrs(model.inv_refs()), gg);
        }

        Tape tape;
        ModelVars v = model_vars(tape, model, true, true, false);
        Var total;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const PairBatch& pb = batch[i];
          // Frozen inverse potential evaluated with the post-inner G.
          IcnnParams omega_now;
          {
            Tape scratch;
            ModelVars sv = model_vars(scratch, model, false, false, false);
            Var z = scratch.constant(Mat(z_cached[i]));
            if (!model.ablated) z = z;  // embeddings stay fixed within the iteration
            omega_now = icnn_read(scratch, hypernet_generate(scratch, sv.hg, z));
          }
          const Mat pushed = transport_map_batch(omega_now, pb.y);
          Var z = context_of(tape, model, v, pb.x);
          IcnnVars theta = hypernet_generate(tape, v.hf, z);
          Var outer = mmv2_outer_loss(tape, icnn_potential_fn(theta), pushed,
                                      tape.constant(pb.x));
          result.trace.push_back(
              {it, pb.pair_id, tape.scalar_value(outer), last_inner[i]});
          Var contrib = tape.scale(outer, 1.0 / static_cast<double>(batch.size()));
          total = total.valid() ? total + contrib : contrib;
        }
        if (!std::isfinite(tape.scalar_value(total)))
          throw NumericalError("train: non-finite loss");
        opt_emb.step(ref_ptrs(model.embedder_refs()),
                     grads_of(tape, emb_vars_of(model, v), total));
        opt_f.step(ref_ptrs(model.fwd_refs()), grads_of(tape, v.hf.all, total));
      }
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.diagnostic = e.what();
  }
  return result;
}

}  // namespace

TrainResult train_pair(HotetModel& model, const EmpiricalDistribution& mu,
                       const EmpiricalDistribution& nu, const TrainConfig& cfg) {
  mu.validate();
  nu.validate();
  model.trained_mode = TrainMode::kPair;
  const int b = cfg.solver.batch;
  return run_training(model, cfg, [&](int, Rng& rng) {
    std::vector<PairBatch> batch;
    batch.push_back({0, mu.sample(b, rng), nu.sample(b, rng)});
    return batch;
  });
}

TrainResult train_multi(HotetModel& model, const std::vector<EmpiricalDistribution>& sources,
                        const EmpiricalDistribution& nu, const TrainConfig& cfg) {
  if (sources.empty()) throw ShapeError("train_multi: no source distributions");
  for (const auto& s : sources) s.validate();
  nu.validate();
  model.trained_mode = TrainMode::kMulti;
  const int b = cfg.solver.batch;
  const int n = static_cast<int>(sources.size());
  const int dist_batch = std::min(cfg.dist_batch, n);

  auto epoch = std::make_shared<int>(0);  // placeholder to own the sampler below
  (void)epoch;
  auto sampler = std::make_shared<std::optional<EpochSampler>>();
  return run_training(model, cfg, [&, sampler](int, Rng& rng) {
    if (!sampler->has_value()) sampler->emplace(n, rng);
    std::vector<PairBatch> batch;
    for (int i = 0; i < dist_batch; ++i) {
      const int id = (*sampler)->next();
      batch.push_back({id, sources[static_cast<std::size_t>(id)].sample(b, rng),
                       nu.sample(b, rng)});
    }
    return batch;
  });
}

std::pair<IcnnParams, IcnnParams> predict(const HotetModel& model,
                                          const EmpiricalDistribution& mu_new) {
  mu_new.validate();
  if (mu_new.dim() != model.tspec.input_dim) throw ShapeError("predict: dimension mismatch");
  HotetModel& m = const_cast<HotetModel&>(model);  // read-only pass, vars are constants
  Tape tape;
  ModelVars v = model_vars(tape, m, false, false, false);
  Var z = m.ablated ? v.ctx : embed_graph(tape, v.emb, mu_new);
  IcnnParams fwd = icnn_read(tape, hypernet_generate(tape, v.hf, z));
  IcnnParams inv = icnn_read(tape, hypernet_generate(tape, v.hg, z));
  return {std::move(fwd), std::move(inv)};
}

TrainResult finetune(HotetModel& model, const EmpiricalDistribution& mu_new,
                     const EmpiricalDistribution& nu, int steps, TrainConfig cfg) {
  cfg.iterations = steps;
  if (model.trained_mode == TrainMode::kMulti) {
    const TrainMode keep = model.trained_mode;
    cfg.dist_batch = 1;
    TrainResult r = train_multi(model, {mu_new}, nu, cfg);
    model.trained_mode = keep;
    return r;
  }
  return train_pair(model, mu_new, nu, cfg);
}

}  // namespace hotet
