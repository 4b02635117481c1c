#include "ovp/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ovp/jsonutil.hpp"

namespace ovp::dynamics {

using nn::Bound;
using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string predictor_name(PredictorKind k) {
  return k == PredictorKind::kResin ? "resin" : "mlp";
}

PredictorKind predictor_from_name(const std::string& s) {
  if (s == "resin") return PredictorKind::kResin;
  if (s == "mlp") return PredictorKind::kMlp;
  throw ConfigError("dynamic: unknown predictor '" + s + "' (resin|mlp)");
}

std::string reduction_name(nn::Reduce r) {
  switch (r) {
    case nn::Reduce::kSum: return "sum";
    case nn::Reduce::kAvg: return "avg";
    case nn::Reduce::kMax: return "max";
  }
  return "avg";
}

nn::Reduce reduction_from_name(const std::string& s) {
  if (s == "sum") return nn::Reduce::kSum;
  if (s == "avg") return nn::Reduce::kAvg;
  if (s == "max") return nn::Reduce::kMax;
  throw ConfigError("dynamic: unknown reduction '" + s + "' (sum|avg|max)");
}

void DynamicConfig::validate() const {
  check_config(tau >= 0, "dynamic: tau must be >= 0");
  check_config(latent_dim >= 1, "dynamic: latent_dim must be >= 1");
  check_config(resin_blocks >= 1, "dynamic: resin_blocks must be >= 1");
  check_config(delta_t_train >= 1, "dynamic: delta_t_train must be >= 1");
  check_config(observe >= tau + 1,
               "dynamic: observe must be >= tau+1 observed frames");
  check_config(lr > 0.0 && batch >= 1 && epochs >= 1 && patience >= 1,
               "dynamic: bad optimizer settings");
  check_config(clips_per_episode >= 1, "dynamic: clips_per_episode must be >= 1");
  check_config(pose_dim >= 3, "dynamic: pose_dim must be >= 3");
  check_config(feat_channels >= 1 && latent_hw >= 2 && sigma > 0.0,
               "dynamic: bad perceptual mirror settings");
}

nlohmann::json DynamicConfig::to_json() const {
  return nlohmann::json{{"tau", tau},
                        {"latent_dim", latent_dim},
                        {"resin_blocks", resin_blocks},
                        {"reduction", reduction_name(reduction)},
                        {"delta_t_train", delta_t_train},
                        {"observe", observe},
                        {"lr", lr},
                        {"batch", batch},
                        {"epochs", epochs},
                        {"patience", patience},
                        {"clips_per_episode", clips_per_episode},
                        {"aggregator", aggregator},
                        {"predictor", predictor_name(predictor)},
                        {"seed", seed},
                        {"pose_dim", pose_dim},
                        {"feat_channels", feat_channels},
                        {"latent_hw", latent_hw},
                        {"sigma", sigma}};
}

DynamicConfig DynamicConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(
      j,
      {"tau", "latent_dim", "resin_blocks", "reduction", "delta_t_train",
       "observe", "lr", "batch", "epochs", "patience", "clips_per_episode",
       "aggregator", "predictor", "seed", "pose_dim", "feat_channels",
       "latent_hw", "sigma"},
      "dynamic config");
  DynamicConfig c;
  c.tau = json_get<int>(j, "tau", c.tau);
  c.latent_dim = json_get<int>(j, "latent_dim", c.latent_dim);
  c.resin_blocks = json_get<int>(j, "resin_blocks", c.resin_blocks);
  c.reduction = reduction_from_name(
      json_get<std::string>(j, "reduction", reduction_name(c.reduction)));
  c.delta_t_train = json_get<int>(j, "delta_t_train", c.delta_t_train);
  c.observe = json_get<int>(j, "observe", c.observe);
  c.lr = json_get<double>(j, "lr", c.lr);
  c.batch = json_get<int>(j, "batch", c.batch);
  c.epochs = json_get<int>(j, "epochs", c.epochs);
  c.patience = json_get<int>(j, "patience", c.patience);
  c.clips_per_episode = json_get<int>(j, "clips_per_episode", c.clips_per_episode);
  c.aggregator = json_get<bool>(j, "aggregator", c.aggregator);
  c.predictor = predictor_from_name(
      json_get<std::string>(j, "predictor", predictor_name(c.predictor)));
  c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
  c.pose_dim = json_get<int>(j, "pose_dim", c.pose_dim);
  c.feat_channels = json_get<int>(j, "feat_channels", c.feat_channels);
  c.latent_hw = json_get<int>(j, "latent_hw", c.latent_hw);
  c.sigma = json_get<double>(j, "sigma", c.sigma);
  return c;
}

void DynamicConfig::sync_with_perceptual(
    const perceptual::PerceptualConfig& p) {
  pose_dim = p.pose_dim();
  feat_channels = p.feat_channels;
  latent_hw = p.latent_hw;
  sigma = p.sigma;
}

RelationSet full_relations(int n_objects) {
  check_config(n_objects >= 1, "relations: need at least one object");
  RelationSet r;
  r.n_objects = n_objects;
  for (int s = 0; s < n_objects; ++s)
    for (int d = 0; d < n_objects; ++d) {
      if (s == d) continue;
      r.senders.push_back(s);
      r.receivers.push_back(d);
    }
  return r;
}

DynamicParams::DynamicParams(const DynamicConfig& c) : cfg(c) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xD1));
  int L = cfg.latent_dim;
  embed = nn::Linear(cfg.hybrid_dim(), L, rng);
  for (int b = 0; b < cfg.resin_blocks; ++b) {
    InBlock blk;
    if (cfg.predictor == PredictorKind::kResin)
      blk.f_r = nn::Mlp(2 * L, {L, L}, L, rng);
    blk.f_o = nn::Mlp(2 * L, {L, L}, L, rng);
    blocks.push_back(std::move(blk));
  }
  project = nn::Linear(L, cfg.pose_dim, rng, 0.0);
}

std::vector<nn::ParamRef> DynamicParams::param_refs() {
  std::vector<nn::ParamRef> refs;
  embed.collect("dyn.embed", refs);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::string prefix = "dyn.b" + std::to_string(b);
    if (!blocks[b].f_r.layers.empty()) blocks[b].f_r.collect(prefix + ".fr", refs);
    blocks[b].f_o.collect(prefix + ".fo", refs);
  }
  project.collect("dyn.project", refs);
  return refs;
}

std::int64_t DynamicParams::param_count() {
  std::int64_t n = 0;
  for (const nn::ParamRef& r : param_refs()) n += r.value->size();
  return n;
}

std::vector<Tensor> DynamicParams::snapshot() const {
  auto& self = const_cast<DynamicParams&>(*this);
  std::vector<Tensor> out;
  for (const nn::ParamRef& r : self.param_refs()) out.push_back(*r.value);
  return out;
}

void DynamicParams::restore(const std::vector<Tensor>& snap) {
  auto refs = param_refs();
  check_data(snap.size() == refs.size(), "dynamic: snapshot size mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
}

std::vector<std::array<double, 2>> compute_velocities(
    const std::vector<std::array<double, 2>>& history, int tau) {
  check_data(static_cast<int>(history.size()) >= tau + 1,
             "compute_velocities: history length " +
                 std::to_string(history.size()) + " is less than tau+1 = " +
                 std::to_string(tau + 1));
  std::vector<std::array<double, 2>> out;
  int last = static_cast<int>(history.size()) - 1;
  for (int k = 0; k < tau; ++k) {
    const auto& a = history[last - k];
    const auto& b = history[last - k - 1];
    out.push_back({a[0] - b[0], a[1] - b[1]});
  }
  return out;
}

Var aggregate_context(Tape& t, Var states2d, Var fmap, int batch,
                      int n_objects, double sigma, int latent_hw,
                      nn::Reduce reduction) {
  check_data(states2d.val().ndim() == 2 &&
                 states2d.val().dim(0) == batch * n_objects &&
                 states2d.val().dim(1) >= 3,
             "aggregate_context: states must be [B*N, pose_dim]");
  check_data(fmap.val().ndim() == 4 && fmap.val().dim(0) == batch &&
                 fmap.val().dim(2) == latent_hw &&
                 fmap.val().dim(3) == latent_hw,
             "aggregate_context: feature map spatial shape must equal the "
             "Gaussian grid shape");
  const int feat_ch = fmap.val().dim(1);
  auto g = perceptual::grid_coords(latent_hw);
  Var p = t.reshape(t.slice_cols(states2d, 0, 2), {batch, n_objects, 2});
  Var s = t.reshape(t.slice_cols(states2d, 2, 3), {batch, n_objects});
  Var gmaps = t.gaussian_maps(p, s, g, g, sigma);
  Var ctx = t.attend(gmaps, fmap, reduction);  // [B,N,C']
  return t.reshape(ctx, {batch * n_objects, feat_ch});
}

Var build_hybrid_states(Tape& t, Var states2d,
                        const std::vector<Var>& velocities, Var context) {
  const Tensor& sv = states2d.val();
  check_data(sv.ndim() == 2, "build_hybrid_states: states must be [B*N, D]");
  int rows = sv.dim(0);
  std::vector<Var> parts;
  parts.push_back(states2d);
  for (const Var& v : velocities) {
    check_data(v.val().ndim() == 2 && v.val().dim(0) == rows &&
                   v.val().dim(1) == 2,
               "build_hybrid_states: velocity blocks must align with states");
    parts.push_back(v);
  }
  if (context.id >= 0) {
    check_data(context.val().ndim() == 2 && context.val().dim(0) == rows,
               "build_hybrid_states: context rows must align with states");
    parts.push_back(context);
  }
  return parts.size() > 1 ? t.concat_cols(parts) : parts[0];
}

Var interaction_step(Tape& t, const Bound& bp, const InBlock& block,
                     Var nodes, int batch, int n_objects, PredictorKind kind) {
  const Tensor& nv = nodes.val();
  check_data(nv.ndim() == 2 && nv.dim(0) == batch * n_objects,
             "interaction_step: nodes must be [B*N, L]");
  int L = nv.dim(1);
  Var agg{nullptr, -1};
  RelationSet rel = full_relations(n_objects);
  bool no_edges = rel.senders.empty() || kind == PredictorKind::kMlp;
  if (no_edges) {
    agg = t.constant(Tensor({batch * n_objects, L}));
  } else {
    std::vector<int> send_idx, recv_idx;
    send_idx.reserve(batch * rel.senders.size());
    recv_idx.reserve(batch * rel.senders.size());
    for (int b = 0; b < batch; ++b)
      for (std::size_t m = 0; m < rel.senders.size(); ++m) {
        send_idx.push_back(b * n_objects + rel.senders[m]);
        recv_idx.push_back(b * n_objects + rel.receivers[m]);
      }
    Var senders = t.rows_gather(nodes, send_idx);
    Var receivers = t.rows_gather(nodes, recv_idx);
    // Relation attribute is a zero-length vector; f_R sees (sender, receiver).
    Var effects = block.f_r(t, bp, t.concat_cols({senders, receivers}));
    check_config(effects.val().dim(1) == L,
                 "interaction_step: effect dimension must equal latent dim");
    agg = t.rows_scatter_sorted_sum(effects, recv_idx, batch * n_objects);
  }
  Var updated = block.f_o(t, bp, t.concat_cols({nodes, agg}));
  check_config(updated.val().dim(1) == L,
               "interaction_step: f_O must preserve the latent dimension");
  return updated;
}

Var resin_step(Tape& t, const Bound& bp, const InBlock& block, Var nodes,
               int batch, int n_objects, PredictorKind kind) {
  Var in_out = interaction_step(t, bp, block, nodes, batch, n_objects, kind);
  return t.add(in_out, nodes);
}

Var predict_delta(Tape& t, const Bound& bp, const DynamicParams& params,
                  Var hybrid, int batch, int n_objects) {
  const Tensor& hv = hybrid.val();
  check_config(hv.ndim() == 2 && hv.dim(1) == params.cfg.hybrid_dim(),
               "predict_delta: hybrid dim " + std::to_string(hv.dim(1)) +
                   " does not match configuration " +
                   std::to_string(params.cfg.hybrid_dim()));
  Var h = t.silu(params.embed(t, bp, hybrid));
  for (const InBlock& blk : params.blocks)
    h = resin_step(t, bp, blk, h, batch, n_objects, params.cfg.predictor);
  return params.project(t, bp, h);
}

namespace {

// positions of frame t as [B*N, 2] from observed [B,T,N,D]
Tensor observed_positions(const Tensor& observed, int t_idx) {
  int B = observed.dim(0), N = observed.dim(2), D = observed.dim(3);
  Tensor out({B * N, 2});
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) {
      out(b * N + n, 0) = observed(b, t_idx, n, 0);
      out(b * N + n, 1) = observed(b, t_idx, n, 1);
    }
  return out;
}

}  // namespace

std::vector<Var> rollout_on_tape(Tape& t, const Bound& bp,
                                 const DynamicParams& params,
                                 const Tensor& observed, const Tensor& fmap,
                                 int horizon, RolloutTrace* trace) {
  const DynamicConfig& cfg = params.cfg;
  check_data(observed.ndim() == 4, "rollout: observed must be [B,T,N,D]");
  int B = observed.dim(0), T = observed.dim(1), N = observed.dim(2),
      D = observed.dim(3);
  check_data(D == cfg.pose_dim, "rollout: pose dimension mismatch");
  check_data(T >= cfg.tau + 1,
             "rollout: history length error, need T >= tau+1 = " +
                 std::to_string(cfg.tau + 1) + " observed frames, got " +
                 std::to_string(T));
  check_data(horizon >= 0, "rollout: negative horizon");

  Var fmap_v = t.constant(fmap);
  // Position history, oldest..newest, always tau+1 entries.
  std::deque<Var> history;
  for (int k = T - cfg.tau - 1; k < T; ++k)
    history.push_back(t.constant(observed_positions(observed, k)));

  // Current full state = last observed frame.
  Tensor cur0({B * N, D});
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int d = 0; d < D; ++d)
        cur0(b * N + n, d) = observed(b, T - 1, n, d);
  Var cur = t.constant(cur0);

  std::vector<Var> preds;
  preds.reserve(horizon);
  for (int step = 0; step < horizon; ++step) {
    std::vector<Var> velocities;
    for (int k = 0; k < cfg.tau; ++k) {
      std::size_t last = history.size() - 1;
      velocities.push_back(t.sub(history[last - k], history[last - k - 1]));
    }
    Var context{nullptr, -1};
    if (cfg.aggregator)
      context = aggregate_context(t, cur, fmap_v, B, N, cfg.sigma,
                                  cfg.latent_hw, cfg.reduction);
    Var hybrid = build_hybrid_states(t, cur, velocities, context);
    if (trace) {
      trace->hybrid.push_back(hybrid.val());
      std::vector<Tensor> hist_vals;
      for (const Var& h : history) hist_vals.push_back(h.val());
      trace->position_history.push_back(std::move(hist_vals));
    }
    Var delta = predict_delta(t, bp, params, hybrid, B, N);
    cur = t.add(cur, delta);
    history.push_back(t.slice_cols(cur, 0, 2));
    if (static_cast<int>(history.size()) > cfg.tau + 1) history.pop_front();
    preds.push_back(cur);
  }
  return preds;
}

nn::Tensor rollout(DynamicParams& params, const Tensor& observed,
                   const Tensor& fmap, int horizon, RolloutTrace* trace) {
  check_data(observed.ndim() == 3, "rollout: observed must be [T,N,D]");
  int T = observed.dim(0), N = observed.dim(1), D = observed.dim(2);
  Tensor obs_b = observed.reshaped({1, T, N, D});
  Tensor fmap_b = fmap.reshaped(
      {1, fmap.dim(0), fmap.dim(1), fmap.dim(2)});
  Tape t;
  auto refs = params.param_refs();
  Bound bp(t, refs, false);
  std::vector<Var> preds =
      rollout_on_tape(t, bp, params, obs_b, fmap_b, horizon, trace);
  Tensor out({horizon, N, D});
  for (int k = 0; k < horizon; ++k) {
    const Tensor& pv = preds[k].val();
    std::copy(pv.data.begin(), pv.data.end(),
              &out.data[(std::size_t)k * N * D]);
  }
  return out;
}

double dynamic_loss_value(const Tensor& pred, const Tensor& gt) {
  check_data(pred.shape == gt.shape, "dynamic_loss: shape mismatch " +
                                         pred.shape_str() + " vs " +
                                         gt.shape_str());
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    double d = pred.data[i] - gt.data[i];
    s += d * d;
  }
  return s;
}

StateDataset extract_dataset_states(perceptual::PerceptualParams& pparams,
                                    const perceptual::LoadedDataset& data) {
  StateDataset out;
  for (const auto& ep : data.train)
    out.train.push_back(perceptual::extract_state_sequence(pparams, ep.frames));
  for (const auto& ep : data.val)
    out.val.push_back(perceptual::extract_state_sequence(pparams, ep.frames));
  for (const auto& ep : data.test)
    out.test.push_back(perceptual::extract_state_sequence(pparams, ep.frames));
  return out;
}

namespace {

struct Window {
  int episode = 0;
  int t0 = 0;
};

struct BatchTensors {
  Tensor observed;  // [B,T_obs,N,D]
  Tensor targets;   // [B,DT,N,D]
  Tensor fmaps;     // [B,C',H,W]
};

BatchTensors assemble_batch(const std::vector<perceptual::SequenceStates>& eps,
                            const std::vector<Window>& wins, std::size_t w0,
                            std::size_t w1, const DynamicConfig& cfg) {
  int B = static_cast<int>(w1 - w0);
  const Tensor& poses0 = eps[wins[w0].episode].poses;
  int N = poses0.dim(1), D = poses0.dim(2);
  const Tensor& f0 = eps[wins[w0].episode].feature_map;
  BatchTensors bt;
  bt.observed = Tensor({B, cfg.observe, N, D});
  bt.targets = Tensor({B, cfg.delta_t_train, N, D});
  bt.fmaps = Tensor({B, f0.dim(0), f0.dim(1), f0.dim(2)});
  for (int b = 0; b < B; ++b) {
    const Window& w = wins[w0 + b];
    const Tensor& poses = eps[w.episode].poses;
    const Tensor& f = eps[w.episode].feature_map;
    for (int k = 0; k < cfg.observe; ++k)
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d)
          bt.observed(b, k, n, d) = poses(w.t0 + k, n, d);
    for (int k = 0; k < cfg.delta_t_train; ++k)
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d)
          bt.targets(b, k, n, d) = poses(w.t0 + cfg.observe + k, n, d);
    std::copy(f.data.begin(), f.data.end(),
              &bt.fmaps.data[(std::size_t)b * f.size()]);
  }
  return bt;
}

// Eq.-17 loss over a batch of windows; optionally performs the Adam step.
double run_dynamic_batch(DynamicParams& params,
                         const std::vector<perceptual::SequenceStates>& eps,
                         const std::vector<Window>& wins, std::size_t w0,
                         std::size_t w1, const std::vector<nn::ParamRef>& refs,
                         bool train, nn::Adam* opt) {
  const DynamicConfig& cfg = params.cfg;
  BatchTensors bt = assemble_batch(eps, wins, w0, w1, cfg);
  int B = bt.observed.dim(0), N = bt.observed.dim(2), D = bt.observed.dim(3);
  Tape tape;
  Bound bp(tape, refs, train);
  std::vector<Var> preds = rollout_on_tape(tape, bp, params, bt.observed,
                                           bt.fmaps, cfg.delta_t_train);
  Var total{nullptr, -1};
  for (int k = 0; k < cfg.delta_t_train; ++k) {
    Tensor tgt({B * N, D});
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n)
        for (int d = 0; d < D; ++d)
          tgt(b * N + n, d) = bt.targets(b, k, n, d);
    Var term = tape.sum_all(tape.square(tape.sub(preds[k], tape.constant(tgt))));
    total = (k == 0) ? term : tape.add(total, term);
  }
  Var loss = tape.scale(total, 1.0 / static_cast<double>(B));
  double loss_v = loss.val()(0);
  if (!std::isfinite(loss_v))
    throw NumericError("dynamic training: non-finite loss");
  if (train) {
    tape.backward(loss);
    opt->step(refs, tape, bp);
  }
  return loss_v;
}

}  // namespace

perceptual::TrainResult train_dynamic(DynamicParams& params,
                                      const StateDataset& data) {
  const DynamicConfig& cfg = params.cfg;
  cfg.validate();
  check_data(!data.train.empty(), "dataset error: no training state sequences");
  check_data(!data.val.empty(), "dataset error: no validation state sequences");
  int need = cfg.observe + cfg.delta_t_train;
  for (const auto& s : data.train) {
    check_config(cfg.tau < s.poses.dim(0),
                 "dynamic: tau must be smaller than clip length");
    check_config(s.poses.dim(0) >= need,
                 "dynamic: training clips need observe+delta_t_train = " +
                     std::to_string(need) + " frames, got " +
                     std::to_string(s.poses.dim(0)));
    check_data(s.poses.dim(2) == cfg.pose_dim,
               "dynamic: state dataset pose dim mismatch");
  }

  auto refs = params.param_refs();
  nn::Adam opt(cfg.lr);
  perceptual::TrainResult result;
  std::vector<Tensor> best;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<Window> val_wins;
  for (std::size_t i = 0; i < data.val.size(); ++i)
    val_wins.push_back({static_cast<int>(i), 0});
  double per_entry = 1.0;
  {
    int N = data.val[0].poses.dim(1);
    per_entry = static_cast<double>(cfg.delta_t_train) * N * cfg.pose_dim;
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0xB000 + static_cast<std::uint64_t>(epoch)));
    std::vector<Window> wins;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      int slack = data.train[i].poses.dim(0) - need;
      for (int k = 0; k < cfg.clips_per_episode; ++k)
        wins.push_back({static_cast<int>(i),
                        slack > 0 ? static_cast<int>(erng.below(slack + 1)) : 0});
    }
    erng.shuffle(wins);

    double train_loss = 0.0;
    for (std::size_t w0 = 0; w0 < wins.size(); w0 += cfg.batch) {
      std::size_t w1 = std::min(wins.size(), w0 + cfg.batch);
      double lv = run_dynamic_batch(params, data.train, wins, w0, w1, refs,
                                    true, &opt);
      train_loss += lv * static_cast<double>(w1 - w0);
    }
    train_loss /= static_cast<double>(wins.size());

    double val_loss = 0.0;
    for (std::size_t w0 = 0; w0 < val_wins.size(); w0 += cfg.batch) {
      std::size_t w1 = std::min(val_wins.size(), w0 + cfg.batch);
      double lv = run_dynamic_batch(params, data.val, val_wins, w0, w1, refs,
                                    false, nullptr);
      val_loss += lv * static_cast<double>(w1 - w0);
    }
    val_loss /= static_cast<double>(val_wins.size());

    result.log.push_back({epoch, train_loss, val_loss, val_loss / per_entry,
                          opt.lr()});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = params.snapshot();
      result.best_val_loss = val_loss;
      result.best_val_mse = val_loss / per_entry;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      opt.set_lr(opt.lr() / 2.0);
      since_best = 0;
    }
  }
  if (!best.empty()) params.restore(best);
  return result;
}

void save_dynamic(const std::string& path, DynamicParams& params) {
  save_checkpoint(path, "dynamic", params.cfg.to_json(), params.param_refs());
}

DynamicParams load_dynamic(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  check_data(ckpt.kind == "dynamic",
             "checkpoint: expected kind 'dynamic', found '" + ckpt.kind + "'");
  DynamicParams params(DynamicConfig::from_json(ckpt.hyper));
  assign_params(ckpt, params.param_refs());
  return params;
}

}  // namespace ovp::dynamics
