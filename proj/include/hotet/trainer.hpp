#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "hotet/distribution.hpp"
#include "hotet/embedder.hpp"
#include "hotet/hypernet.hpp"
#include "hotet/icnn.hpp"
#include "hotet/solvers.hpp"

namespace hotet {

enum class TrainMode { kPair, kMulti };

struct TrainConfig {
  int iterations = 5000;  // K
  int dist_batch = 8;     // B, multi mode only
  SolverConfig solver;    // sample batch b, solver kind, learning rate
  std::uint64_t seed = 1;
};

/// The three trainable modules: embedder E, forward hypernetwork F and
/// inverse hypernetwork G. Generated ICNN weights are intermediate values of
/// the forward pass, never stored state. The ablation variant replaces the
/// embedder output with a single trainable context vector.
struct HotetModel {
  TransformerSpec tspec;
  IcnnSpec icnn_spec;
  HypernetSpec hspec;
  TransformerParams embedder;
  HypernetParams hyper_fwd;  // F
  HypernetParams hyper_inv;  // G
  bool ablated = false;
  Eigen::MatrixXd const_ctx;  // d_ctx x 1, only used when ablated
  TrainMode trained_mode = TrainMode::kPair;
  std::string reference_note;  // free-form description of the reference measure

  std::vector<std::pair<std::string, Eigen::MatrixXd*>> embedder_refs();
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> fwd_refs();
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> inv_refs();
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_refs();
};

HotetModel hotet_init(int input_dim, std::uint64_t seed,
                      const IcnnSpec* icnn = nullptr, const TransformerSpec* tf = nullptr,
                      int hyper_hidden = 256);

/// Embedder swapped for a constant trainable context vector; all else equal.
HotetModel ablate_embedding(const HotetModel& model, std::uint64_t seed);

struct TraceRow {
  int iteration = 0;
  int pair_id = 0;
  double loss_fwd = 0.0;
  double loss_inv = 0.0;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  bool diverged = false;
  std::string diagnostic;
};

/// One-to-one training: theta = F(E(x-batch)), omega = G(E(y-batch)).
TrainResult train_pair(HotetModel& model, const EmpiricalDistribution& mu,
                       const EmpiricalDistribution& nu, const TrainConfig& cfg);

/// Multiple-to-one training against a fixed reference: both maps for source
/// i are generated from the same embedding of mu_i. Distribution minibatches
/// are drawn without replacement per epoch; sample minibatches with
/// replacement.
TrainResult train_multi(HotetModel& model, const std::vector<EmpiricalDistribution>& sources,
                        const EmpiricalDistribution& nu, const TrainConfig& cfg);

/// Pure forward pass: generated (forward, inverse) ICNN weights for an
/// unseen distribution. No gradient steps.
std::pair<IcnnParams, IcnnParams> predict(const HotetModel& model,
                                          const EmpiricalDistribution& mu_new);

/// Warm-up training restricted to one new pair, using the routing the model
/// was trained with. Default 50 steps.
TrainResult finetune(HotetModel& model, const EmpiricalDistribution& mu_new,
                     const EmpiricalDistribution& nu, int steps, TrainConfig cfg);

}  // namespace hotet
