#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovp/nn.hpp"
#include "ovp/perceptual.hpp"

namespace ovp::dynamics {

enum class PredictorKind { kResin, kMlp };

std::string predictor_name(PredictorKind k);
PredictorKind predictor_from_name(const std::string& s);

std::string reduction_name(nn::Reduce r);
nn::Reduce reduction_from_name(const std::string& s);

struct DynamicConfig {
  int tau = 2;              // velocity history length (0 for blocktower)
  int latent_dim = 256;
  int resin_blocks = 2;
  nn::Reduce reduction = nn::Reduce::kAvg;
  int delta_t_train = 20;   // closed-loop rollout length in training
  int observe = 3;          // observed frames per training window (>= tau+1)
  double lr = 5e-4;
  int batch = 16;
  int epochs = 40;
  int patience = 10;
  int clips_per_episode = 2;
  bool aggregator = true;          // ablation: drop a_n from the hybrid state
  PredictorKind predictor = PredictorKind::kResin;  // ablation: per-object MLP
  std::uint64_t seed = 0;

  // Mirrors of the perceptual configuration this module consumes.
  int pose_dim = 7;        // 3 + C
  int feat_channels = 32;  // C'
  int latent_hw = 16;
  double sigma = 0.1;

  int hybrid_dim() const {
    return pose_dim + 2 * tau + (aggregator ? feat_channels : 0);
  }
  void validate() const;
  nlohmann::json to_json() const;
  static DynamicConfig from_json(const nlohmann::json& j);
  void sync_with_perceptual(const perceptual::PerceptualConfig& p);
};

// Directed edges of the fully connected graph: all ordered pairs, no
// self-edges, N*(N-1) total. Relation attributes are empty by construction.
struct RelationSet {
  int n_objects = 0;
  std::vector<int> senders;
  std::vector<int> receivers;
};
RelationSet full_relations(int n_objects);

struct InBlock {
  nn::Mlp f_r;  // effect function; absent for the per-object MLP ablation
  nn::Mlp f_o;  // node update (node latent, summed effects)
};

struct DynamicParams {
  DynamicConfig cfg;
  nn::Linear embed;
  std::vector<InBlock> blocks;
  nn::Linear project;  // zero-initialized: a fresh module is the identity rollout

  DynamicParams() = default;
  explicit DynamicParams(const DynamicConfig& cfg);

  std::vector<nn::ParamRef> param_refs();
  std::int64_t param_count();
  std::vector<nn::Tensor> snapshot() const;
  void restore(const std::vector<nn::Tensor>& snap);
};

// Finite-difference velocities, newest first (Eq.-10 style p^k - p^{k-1}).
// history holds positions oldest..newest and must have length >= tau+1.
std::vector<std::array<double, 2>> compute_velocities(
    const std::vector<std::array<double, 2>>& history, int tau);

// Gaussian-attention context vectors for a batch of object states.
// states2d [B*N, pose_dim], fmap [B,C',H,W] -> [B*N, C'].
nn::Var aggregate_context(nn::Tape& t, nn::Var states2d, nn::Var fmap,
                          int batch, int n_objects, double sigma, int latent_hw,
                          nn::Reduce reduction);

// Exact concatenation [pose, velocities newest-first, context]; every input
// indexes objects the same way ([B*N, d_i]). context may be invalid (id < 0)
// when the aggregator is ablated.
nn::Var build_hybrid_states(nn::Tape& t, nn::Var states2d,
                            const std::vector<nn::Var>& velocities,
                            nn::Var context);

// One Interaction Network pass over node latents [B*N, L].
nn::Var interaction_step(nn::Tape& t, const nn::Bound& bp, const InBlock& block,
                         nn::Var nodes, int batch, int n_objects,
                         PredictorKind kind);
// ResIN(O) = IN(O) + O.
nn::Var resin_step(nn::Tape& t, const nn::Bound& bp, const InBlock& block,
                   nn::Var nodes, int batch, int n_objects, PredictorKind kind);

// Full predictor: hybrid [B*N, hybrid_dim] -> state delta [B*N, pose_dim].
nn::Var predict_delta(nn::Tape& t, const nn::Bound& bp,
                      const DynamicParams& params, nn::Var hybrid, int batch,
                      int n_objects);

// Instrumentation hook: per rollout step, the hybrid states and the position
// history that produced their velocity entries.
struct RolloutTrace {
  std::vector<nn::Tensor> hybrid;             // [B*N, hybrid_dim] per step
  std::vector<std::vector<nn::Tensor>> position_history;  // oldest..newest
};

// Batched closed-loop rollout on an existing tape. observed [B,T,N,D] and
// fmap [B,C',H,W] enter as constants; gradients flow through parameters and
// the predicted chain. Returns one Var [B*N, D] per predicted step.
std::vector<nn::Var> rollout_on_tape(nn::Tape& t, const nn::Bound& bp,
                                     const DynamicParams& params,
                                     const nn::Tensor& observed,
                                     const nn::Tensor& fmap, int horizon,
                                     RolloutTrace* trace = nullptr);

// Single-sequence inference wrapper: observed [T,N,D], fmap [C',H,W]
// -> predicted [horizon,N,D].
nn::Tensor rollout(DynamicParams& params, const nn::Tensor& observed,
                   const nn::Tensor& fmap, int horizon,
                   RolloutTrace* trace = nullptr);

// Sum of squared state errors over steps and objects, mean over batch.
double dynamic_loss_value(const nn::Tensor& pred, const nn::Tensor& gt);

struct StateDataset {
  std::vector<perceptual::SequenceStates> train, val, test;
};
StateDataset extract_dataset_states(perceptual::PerceptualParams& pparams,
                                    const perceptual::LoadedDataset& data);

perceptual::TrainResult train_dynamic(DynamicParams& params,
                                      const StateDataset& data);

void save_dynamic(const std::string& path, DynamicParams& params);
DynamicParams load_dynamic(const std::string& path);

}  // namespace ovp::dynamics
