#include "ovp/config.hpp"

#include <fstream>

#include "ovp/jsonutil.hpp"

namespace ovp {

nlohmann::json MetricSettings::to_json() const {
  return nlohmann::json{{"lpsnr_window", lpsnr_window},
                        {"embedder_seed", embedder_seed}};
}

MetricSettings MetricSettings::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"lpsnr_window", "embedder_seed"}, "metrics config");
  MetricSettings m;
  m.lpsnr_window = json_get<int>(j, "lpsnr_window", m.lpsnr_window);
  m.embedder_seed = json_get<std::uint64_t>(j, "embedder_seed", m.embedder_seed);
  check_config(m.lpsnr_window >= 2, "metrics: lpsnr_window must be >= 2");
  return m;
}

void RunConfig::validate() const {
  world.validate();
  perceptual.validate();
  dynamic.validate();
  check_config(world.image_hw == perceptual.image_hw,
               "config: world.image_hw and perceptual.image_hw disagree");
}

nlohmann::json RunConfig::to_json() const {
  return nlohmann::json{{"seed", seed},
                        {"world", world.to_json()},
                        {"perceptual", perceptual.to_json()},
                        {"dynamic", dynamic.to_json()},
                        {"metrics", metrics.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"seed", "world", "perceptual", "dynamic", "metrics"},
                      "run config");
  RunConfig c;
  c.seed = json_get<std::uint64_t>(j, "seed", 0);
  if (j.contains("world"))
    c.world = physim::WorldConfig::from_json(j.at("world"));
  if (j.contains("perceptual")) {
    c.perceptual = perceptual::PerceptualConfig::from_json(j.at("perceptual"));
    if (!j.at("perceptual").contains("image_hw"))
      c.perceptual.image_hw = c.world.image_hw;
    if (!j.at("perceptual").contains("latent_hw"))
      c.perceptual.latent_hw = c.perceptual.image_hw / 4;
  } else {
    c.perceptual.image_hw = c.world.image_hw;
    c.perceptual.latent_hw = c.world.image_hw / 4;
  }
  if (j.contains("dynamic")) {
    const nlohmann::json& dj = j.at("dynamic");
    // The perceptual mirrors (pose_dim, feat_channels, latent_hw, sigma) are
    // derived, not user configuration.
    reject_unknown_keys(dj,
                        {"tau", "latent_dim", "resin_blocks", "reduction",
                         "delta_t_train", "observe", "lr", "batch", "epochs",
                         "patience", "clips_per_episode", "aggregator",
                         "predictor", "seed"},
                        "dynamic config");
    c.dynamic = dynamics::DynamicConfig::from_json(dj);
  }
  c.dynamic.sync_with_perceptual(c.perceptual);
  if (j.contains("metrics"))
    c.metrics = MetricSettings::from_json(j.at("metrics"));
  // Derive sub-seeds from the global seed unless explicitly pinned.
  if (!j.contains("perceptual") || !j.at("perceptual").contains("seed"))
    c.perceptual.seed = derive_seed(c.seed, 1);
  if (!j.contains("dynamic") || !j.at("dynamic").contains("seed"))
    c.dynamic.seed = derive_seed(c.seed, 2);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  check_config(f.good(), "config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace ovp
