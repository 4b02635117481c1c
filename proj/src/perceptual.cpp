#include "ovp/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ovp/jsonutil.hpp"

namespace ovp::perceptual {

using nn::Bound;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void PerceptualConfig::validate() const {
  check_config(n_keypoints >= 1, "perceptual: n_keypoints must be >= 1");
  check_config(n_coeffs >= 1, "perceptual: n_coeffs must be >= 1");
  check_config(sigma > 0.0, "perceptual: sigma must be positive");
  check_config(lambda >= 0.0, "perceptual: lambda must be >= 0");
  check_config(latent_hw >= 2, "perceptual: latent_hw must be >= 2");
  check_config(image_hw == 4 * latent_hw,
               "perceptual: image_hw must equal 4 * latent_hw (two stride-2 "
               "encoder stages, two bilinear doublings in the decoder)");
  check_config(feat_channels >= 1 && enc_width >= 1,
               "perceptual: channel widths must be >= 1");
  check_config(dec_width >= 2 && dec_width % 2 == 0,
               "perceptual: dec_width must be even and >= 2");
  check_config(lr > 0.0 && batch >= 1 && epochs >= 1 && patience >= 1,
               "perceptual: bad optimizer settings");
  check_config(pairs_per_episode >= 1,
               "perceptual: pairs_per_episode must be >= 1");
}

nlohmann::json PerceptualConfig::to_json() const {
  return nlohmann::json{{"n_keypoints", n_keypoints},
                        {"n_coeffs", n_coeffs},
                        {"sigma", sigma},
                        {"lambda", lambda},
                        {"image_hw", image_hw},
                        {"latent_hw", latent_hw},
                        {"feat_channels", feat_channels},
                        {"enc_width", enc_width},
                        {"dec_width", dec_width},
                        {"lr", lr},
                        {"batch", batch},
                        {"epochs", epochs},
                        {"patience", patience},
                        {"pairs_per_episode", pairs_per_episode},
                        {"seed", seed}};
}

PerceptualConfig PerceptualConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(
      j,
      {"n_keypoints", "n_coeffs", "sigma", "lambda", "image_hw", "latent_hw",
       "feat_channels", "enc_width", "dec_width", "lr", "batch", "epochs",
       "patience", "pairs_per_episode", "seed"},
      "perceptual config");
  PerceptualConfig c;
  c.n_keypoints = json_get<int>(j, "n_keypoints", c.n_keypoints);
  c.n_coeffs = json_get<int>(j, "n_coeffs", c.n_coeffs);
  c.sigma = json_get<double>(j, "sigma", c.sigma);
  c.lambda = json_get<double>(j, "lambda", c.lambda);
  c.image_hw = json_get<int>(j, "image_hw", c.image_hw);
  c.latent_hw = json_get<int>(j, "latent_hw", c.latent_hw);
  c.feat_channels = json_get<int>(j, "feat_channels", c.feat_channels);
  c.enc_width = json_get<int>(j, "enc_width", c.enc_width);
  c.dec_width = json_get<int>(j, "dec_width", c.dec_width);
  c.lr = json_get<double>(j, "lr", c.lr);
  c.batch = json_get<int>(j, "batch", c.batch);
  c.epochs = json_get<int>(j, "epochs", c.epochs);
  c.patience = json_get<int>(j, "patience", c.patience);
  c.pairs_per_episode = json_get<int>(j, "pairs_per_episode", c.pairs_per_episode);
  c.seed = json_get<std::uint64_t>(j, "seed", c.seed);
  return c;
}

std::vector<double> grid_coords(int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = -1.0 + 2.0 * i / (n - 1);
  return g;
}

nn::Tensor default_kernel_bank(int n_coeffs) {
  check_config(n_coeffs >= 1, "kernel bank: n_coeffs must be >= 1");
  const double a = 0.5;                    // axis central difference
  const double d = 0.5 / std::sqrt(2.0);   // diagonal central difference
  // 3x3 stencils indexed (ki, kj); +x right (kj), +y up rows (ki).
  const double k0[9] = {0, 0, 0, -a, 0, a, 0, 0, 0};          // d/dx
  const double k45[9] = {-d, 0, 0, 0, 0, 0, 0, 0, d};         // (+x,+y)
  const double k90[9] = {0, -a, 0, 0, 0, 0, 0, a, 0};         // d/dy
  const double k135[9] = {0, 0, -d, 0, 0, 0, d, 0, 0};        // (-x,+y)
  const double* canon[4] = {k0, k45, k90, k135};
  Tensor bank({n_coeffs, 3, 3});
  for (int c = 0; c < n_coeffs; ++c)
    std::copy(canon[c % 4], canon[c % 4] + 9, &bank.data[(std::size_t)c * 9]);
  return bank;
}

nn::Tensor isotropic_gaussian(double px, double py, double s, double sigma,
                              const std::vector<double>& gx,
                              const std::vector<double>& gy) {
  check_config(sigma > 0.0, "isotropic_gaussian: sigma must be positive");
  int h = static_cast<int>(gy.size()), w = static_cast<int>(gx.size());
  Tensor g({h, w});
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double dx = gx[j] - px, dy = gy[i] - py;
      g(i, j) = s * std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
  return g;
}

Var spatial_softmax(Tape& t, Var heatmaps, const std::vector<double>& gx,
                    const std::vector<double>& gy) {
  const Tensor& v = heatmaps.val();
  check_data(v.ndim() == 4, "spatial_softmax: expects [B,N,H,W]");
  int B = v.dim(0), N = v.dim(1), H = v.dim(2), W = v.dim(3);
  check_data(H == static_cast<int>(gy.size()) &&
                 W == static_cast<int>(gx.size()),
             "spatial_softmax: grid size mismatch");
  Var hbar = t.softmax_hw(heatmaps);
  Tensor grid({H * W, 2});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      grid(i * W + j, 0) = gx[j];
      grid(i * W + j, 1) = gy[i];
    }
  Var flat = t.reshape(hbar, {B * N, H * W});
  Var pos = t.matmul_const(flat, grid);
  return t.reshape(pos, {B, N, 2});
}

PerceptualParams::PerceptualParams(const PerceptualConfig& c) : cfg(c) {
  cfg.validate();
  kernel_bank = default_kernel_bank(cfg.n_coeffs);
  Rng rng(derive_seed(cfg.seed, 0x9E1));
  int w = cfg.enc_width;
  int n = cfg.n_keypoints, nc = cfg.n_coeffs;
  feat1 = nn::Conv2d(3, w, 3, 2, 1, rng);
  feat2 = nn::Conv2d(w, 2 * w, 3, 2, 1, rng);
  feat3 = nn::Conv2d(2 * w, cfg.feat_channels, 3, 1, 1, rng);
  pos1 = nn::Conv2d(3, w, 3, 2, 1, rng);
  pos2 = nn::Conv2d(w, 2 * w, 3, 2, 1, rng);
  pos3 = nn::Conv2d(2 * w, n, 3, 1, 1, rng);
  coef1 = nn::Conv2d(3, w, 3, 2, 1, rng);
  coef2 = nn::Conv2d(w, 2 * w, 3, 2, 1, rng);
  coef3 = nn::Conv2d(2 * w, n * (1 + nc), 3, 1, 1, rng);
  int dw = cfg.dec_width;
  dec1 = nn::Conv2d(cfg.feat_channels + n * nc, dw, 3, 1, 1, rng);
  dec2 = nn::Conv2d(dw, dw / 2, 3, 1, 1, rng);
  dec3 = nn::Conv2d(dw / 2, dw / 2, 3, 1, 1, rng);
  dec4 = nn::Conv2d(dw / 2, 3, 3, 1, 1, rng);
}

std::vector<nn::ParamRef> PerceptualParams::param_refs() {
  std::vector<nn::ParamRef> refs;
  feat1.collect("enc.feat1", refs);
  feat2.collect("enc.feat2", refs);
  feat3.collect("enc.feat3", refs);
  pos1.collect("enc.pos1", refs);
  pos2.collect("enc.pos2", refs);
  pos3.collect("enc.pos3", refs);
  coef1.collect("enc.coef1", refs);
  coef2.collect("enc.coef2", refs);
  coef3.collect("enc.coef3", refs);
  dec1.collect("dec.c1", refs);
  dec2.collect("dec.c2", refs);
  dec3.collect("dec.c3", refs);
  dec4.collect("dec.c4", refs);
  return refs;
}

std::vector<Tensor> PerceptualParams::snapshot() const {
  auto& self = const_cast<PerceptualParams&>(*this);
  std::vector<Tensor> out;
  for (const nn::ParamRef& r : self.param_refs()) out.push_back(*r.value);
  return out;
}

void PerceptualParams::restore(const std::vector<Tensor>& snap) {
  auto refs = param_refs();
  check_data(snap.size() == refs.size(), "perceptual: snapshot size mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
}

namespace {

void check_image_batch(const Tensor& v, const PerceptualConfig& cfg) {
  check_data(v.ndim() == 4 && v.dim(1) == 3 && v.dim(2) == cfg.image_hw &&
                 v.dim(3) == cfg.image_hw,
             "encode: image batch shape " + v.shape_str() +
                 " does not match configured (3," +
                 std::to_string(cfg.image_hw) + "," +
                 std::to_string(cfg.image_hw) + ")");
}

}  // namespace

Var encode_features(Tape& t, const Bound& bp, const PerceptualParams& p,
                    Var images) {
  check_image_batch(images.val(), p.cfg);
  Var h = t.silu(p.feat1(t, bp, images));
  h = t.silu(p.feat2(t, bp, h));
  return t.tanh_act(p.feat3(t, bp, h));
}

EncodeOut encode(Tape& t, const Bound& bp, const PerceptualParams& p,
                 Var images) {
  check_image_batch(images.val(), p.cfg);
  const PerceptualConfig& cfg = p.cfg;
  int B = images.val().dim(0);
  int N = cfg.n_keypoints, C = cfg.n_coeffs;
  auto gx = grid_coords(cfg.latent_hw);
  auto gy = grid_coords(cfg.latent_hw);

  EncodeOut out;
  out.fmap = encode_features(t, bp, p, images);

  Var hp = t.silu(p.pos1(t, bp, images));
  hp = t.silu(p.pos2(t, bp, hp));
  Var scores = p.pos3(t, bp, hp);  // [B,N,H',W']
  out.heatmaps = t.softmax_hw(scores);
  {
    Tensor grid({cfg.latent_hw * cfg.latent_hw, 2});
    for (int i = 0; i < cfg.latent_hw; ++i)
      for (int j = 0; j < cfg.latent_hw; ++j) {
        grid(i * cfg.latent_hw + j, 0) = gx[j];
        grid(i * cfg.latent_hw + j, 1) = gy[i];
      }
    Var flat = t.reshape(out.heatmaps, {B * N, cfg.latent_hw * cfg.latent_hw});
    out.positions = t.reshape(t.matmul_const(flat, grid), {B, N, 2});
  }

  Var hc = t.silu(p.coef1(t, bp, images));
  hc = t.silu(p.coef2(t, bp, hc));
  Var cc = p.coef3(t, bp, hc);            // [B,N(1+C),H',W']
  Var pooled = t.spatial_mean(cc);        // [B,N(1+C)]
  out.scales = t.sigmoid_act(t.slice_cols(pooled, 0, N));          // [B,N]
  Var r_flat = t.tanh_act(t.slice_cols(pooled, N, N * (1 + C)));   // [B,N*C]
  out.rots = t.reshape(r_flat, {B, N, C});

  Var pos2d = t.reshape(out.positions, {B * N, 2});
  Var s2d = t.reshape(out.scales, {B * N, 1});
  Var r2d = t.reshape(out.rots, {B * N, C});
  out.poses = t.reshape(t.concat_cols({pos2d, s2d, r2d}), {B, N, 3 + C});
  return out;
}

Var gaussian_stack(Tape& t, Var positions, Var scales, Var rots,
                   const Tensor& bank, double sigma,
                   const std::vector<double>& gx,
                   const std::vector<double>& gy) {
  const Tensor& rv = rots.val();
  check_data(rv.ndim() == 3, "gaussian_stack: rots must be [B,N,C]");
  int B = rv.dim(0), N = rv.dim(1), C = rv.dim(2);
  check_config(bank.ndim() == 3 && bank.dim(0) == C,
               "gaussian_stack: kernel bank must hold exactly " +
                   std::to_string(C) + " kernels");
  Var gbar = t.gaussian_maps(positions, scales, gx, gy, sigma);  // [B,N,H,W]
  Var mid = t.bank_conv_same(gbar, bank);                        // [B,N*C,H,W]
  Var coef = t.reshape(rots, {B, N * C});
  return t.scale_channels(mid, coef);
}

Var build_gaussian_stack(Tape& t, const PerceptualParams& p, Var positions,
                         Var scales, Var rots) {
  auto g = grid_coords(p.cfg.latent_hw);
  return gaussian_stack(t, positions, scales, rots, p.kernel_bank, p.cfg.sigma,
                        g, g);
}

Var decode(Tape& t, const Bound& bp, const PerceptualParams& p, Var fmap_ref,
           Var gstack_tgt) {
  const Tensor& fv = fmap_ref.val();
  const Tensor& gv = gstack_tgt.val();
  check_data(fv.ndim() == 4 && gv.ndim() == 4 && fv.dim(0) == gv.dim(0) &&
                 fv.dim(2) == gv.dim(2) && fv.dim(3) == gv.dim(3),
             "decode: feature map and Gaussian stack spatial shapes differ");
  Var h = t.concat_channels({fmap_ref, gstack_tgt});
  h = t.silu(p.dec1(t, bp, h));
  h = t.bilinear_up2(h);
  h = t.silu(p.dec2(t, bp, h));
  h = t.bilinear_up2(h);
  h = t.silu(p.dec3(t, bp, h));
  return t.sigmoid_act(p.dec4(t, bp, h));
}

Var perceptual_loss(Tape& t, Var target, Var recon, double lambda) {
  check_data(target.val().shape == recon.val().shape,
             "perceptual_loss: shape mismatch");
  Var diff = t.sub(target, recon);
  Var pixel = t.mean_all(t.square(diff));
  if (lambda == 0.0) return pixel;
  static const Tensor kSobelX({3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
  static const Tensor kSobelY({3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1});
  // Sobel is linear, so the gradient difference equals Sobel of the
  // difference; evaluated on the valid interior only.
  Var gx = t.kernel_conv_valid(diff, kSobelX);
  Var gy = t.kernel_conv_valid(diff, kSobelY);
  Var grad_term =
      t.scale(t.add(t.mean_all(t.square(gx)), t.mean_all(t.square(gy))), 0.5);
  return t.add(pixel, t.scale(grad_term, lambda));
}

namespace {

Tensor images_to_batch(const std::vector<const Image*>& imgs) {
  check_data(!imgs.empty(), "images_to_batch: empty batch");
  int c = imgs[0]->c, h = imgs[0]->h, w = imgs[0]->w;
  Tensor t({static_cast<int>(imgs.size()), c, h, w});
  std::size_t per = static_cast<std::size_t>(c) * h * w;
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    check_data(imgs[b]->c == c && imgs[b]->h == h && imgs[b]->w == w,
               "images_to_batch: inconsistent image shapes");
    for (std::size_t i = 0; i < per; ++i)
      t.data[b * per + i] = static_cast<double>(imgs[b]->data[i]);
  }
  return t;
}

}  // namespace

SequenceStates extract_state_sequence(PerceptualParams& p,
                                      const std::vector<Image>& frames) {
  check_data(!frames.empty(), "extract_state_sequence: empty video input");
  const PerceptualConfig& cfg = p.cfg;
  auto refs = p.param_refs();
  SequenceStates out;
  out.poses = Tensor({static_cast<int>(frames.size()), cfg.n_keypoints,
                      cfg.pose_dim()});
  const int chunk = 16;
  for (std::size_t t0 = 0; t0 < frames.size(); t0 += chunk) {
    std::size_t t1 = std::min(frames.size(), t0 + chunk);
    std::vector<const Image*> ptrs;
    for (std::size_t i = t0; i < t1; ++i) ptrs.push_back(&frames[i]);
    Tape tape;
    Bound bp(tape, refs, false);
    Var imgs = tape.constant(images_to_batch(ptrs));
    EncodeOut enc = encode(tape, bp, p, imgs);
    const Tensor& poses = enc.poses.val();
    std::size_t per = static_cast<std::size_t>(cfg.n_keypoints) * cfg.pose_dim();
    for (std::size_t b = 0; b < ptrs.size(); ++b)
      std::copy(&poses.data[b * per], &poses.data[(b + 1) * per],
                &out.poses.data[(t0 + b) * per]);
    if (t0 == 0) {
      const Tensor& f = enc.fmap.val();
      out.feature_map = Tensor({f.dim(1), f.dim(2), f.dim(3)});
      std::copy(f.data.begin(),
                f.data.begin() + static_cast<std::ptrdiff_t>(out.feature_map.size()),
                out.feature_map.data.begin());
    }
  }
  return out;
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset d;
  d.manifest = physim::read_manifest(dir);
  namespace fs = std::filesystem;
  for (const physim::ManifestEntry& e : d.manifest.episodes) {
    physim::Episode ep = physim::read_episode((fs::path(dir) / e.file).string());
    if (e.split == "train")
      d.train.push_back(std::move(ep));
    else if (e.split == "val")
      d.val.push_back(std::move(ep));
    else if (e.split == "test")
      d.test.push_back(std::move(ep));
    else
      throw DataError("manifest: unknown split '" + e.split + "'");
  }
  return d;
}

namespace {

struct PairJob {
  int episode;
  int t_ref;
  int t_tgt;
};

// Forward pass over one batch of (ref, tgt) pairs; returns (loss, pixel mse).
std::pair<double, double> run_batch(PerceptualParams& params,
                                    const std::vector<physim::Episode>& eps,
                                    const std::vector<PairJob>& jobs,
                                    std::size_t j0, std::size_t j1,
                                    const std::vector<nn::ParamRef>& refs,
                                    bool train, nn::Adam* opt) {
  Tape tape;
  Bound bp(tape, refs, train);
  std::vector<const Image*> ref_ptrs, tgt_ptrs;
  for (std::size_t j = j0; j < j1; ++j) {
    const PairJob& job = jobs[j];
    ref_ptrs.push_back(&eps[job.episode].frames[job.t_ref]);
    tgt_ptrs.push_back(&eps[job.episode].frames[job.t_tgt]);
  }
  Var ref = tape.constant(images_to_batch(ref_ptrs));
  Var tgt = tape.constant(images_to_batch(tgt_ptrs));
  Var fmap = encode_features(tape, bp, params, ref);
  EncodeOut enc = encode(tape, bp, params, tgt);
  Var gstack =
      build_gaussian_stack(tape, params, enc.positions, enc.scales, enc.rots);
  Var recon = decode(tape, bp, params, fmap, gstack);
  Var loss = perceptual_loss(tape, tgt, recon, params.cfg.lambda);
  double loss_v = loss.val()(0);
  if (!std::isfinite(loss_v))
    throw NumericError("perceptual training: non-finite loss");
  Var pix = tape.mean_all(tape.square(tape.sub(tgt, recon)));
  double mse_v = pix.val()(0);
  if (train) {
    tape.backward(loss);
    opt->step(refs, tape, bp);
  }
  return {loss_v, mse_v};
}

std::vector<PairJob> validation_pairs(const std::vector<physim::Episode>& eps) {
  std::vector<PairJob> jobs;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    int T = eps[i].frame_count;
    jobs.push_back({static_cast<int>(i), 0, T / 2});
    jobs.push_back({static_cast<int>(i), T / 2, T - 1});
  }
  return jobs;
}

}  // namespace

TrainResult train_perceptual(PerceptualParams& params,
                             const LoadedDataset& data) {
  const PerceptualConfig& cfg = params.cfg;
  cfg.validate();
  check_data(!data.train.empty(), "dataset error: no training episodes");
  check_data(!data.val.empty(), "dataset error: no validation episodes");
  for (const auto& ep : data.train)
    check_data(ep.frame_count >= 2,
               "dataset error: episodes need >= 2 frames for pair sampling");

  auto refs = params.param_refs();
  nn::Adam opt(cfg.lr);
  TrainResult result;
  std::vector<Tensor> best;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  auto val_jobs = validation_pairs(data.val);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng(derive_seed(cfg.seed, 0xA000 + static_cast<std::uint64_t>(epoch)));
    std::vector<PairJob> jobs;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      int T = data.train[i].frame_count;
      for (int k = 0; k < cfg.pairs_per_episode; ++k) {
        int t_ref = static_cast<int>(erng.below(static_cast<std::uint64_t>(T)));
        int t_tgt = static_cast<int>(erng.below(static_cast<std::uint64_t>(T - 1)));
        if (t_tgt >= t_ref) ++t_tgt;  // distinct timesteps
        jobs.push_back({static_cast<int>(i), t_ref, t_tgt});
      }
    }
    erng.shuffle(jobs);

    double train_loss = 0.0;
    for (std::size_t j0 = 0; j0 < jobs.size(); j0 += cfg.batch) {
      std::size_t j1 = std::min(jobs.size(), j0 + cfg.batch);
      auto [loss_v, mse_v] =
          run_batch(params, data.train, jobs, j0, j1, refs, true, &opt);
      train_loss += loss_v * static_cast<double>(j1 - j0);
    }
    train_loss /= static_cast<double>(jobs.size());

    double val_loss = 0.0, val_mse = 0.0;
    for (std::size_t j0 = 0; j0 < val_jobs.size(); j0 += cfg.batch) {
      std::size_t j1 = std::min(val_jobs.size(), j0 + cfg.batch);
      auto [loss_v, mse_v] =
          run_batch(params, data.val, val_jobs, j0, j1, refs, false, nullptr);
      val_loss += loss_v * static_cast<double>(j1 - j0);
      val_mse += mse_v * static_cast<double>(j1 - j0);
    }
    val_loss /= static_cast<double>(val_jobs.size());
    val_mse /= static_cast<double>(val_jobs.size());

    result.log.push_back({epoch, train_loss, val_loss, val_mse, opt.lr()});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = params.snapshot();
      result.best_val_loss = val_loss;
      result.best_val_mse = val_mse;
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

void save_perceptual(const std::string& path, PerceptualParams& params) {
  save_checkpoint(path, "perceptual", params.cfg.to_json(),
                  params.param_refs());
}

PerceptualParams load_perceptual(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  check_data(ckpt.kind == "perceptual",
             "checkpoint: expected kind 'perceptual', found '" + ckpt.kind + "'");
  PerceptualParams params(PerceptualConfig::from_json(ckpt.hyper));
  assign_params(ckpt, params.param_refs());
  return params;
}

}  // namespace ovp::perceptual
