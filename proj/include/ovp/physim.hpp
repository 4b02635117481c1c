#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovp/image.hpp"
#include "ovp/rng.hpp"

namespace ovp::physim {

enum class Scenario { kBalls, kBlocktower };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

// World coordinates are [-1,1]^2; (-1,-1) maps to pixel (0,0).
struct WorldConfig {
  Scenario scenario = Scenario::kBalls;
  int num_objects = 2;
  double ball_radius = 0.15;
  double max_speed = 0.07;    // per-step displacement cap (balls)
  double gravity = 0.004;     // per-step^2 (blocktower)
  double block_size = 0.30;   // block side length (blocktower)
  int frames_per_episode = 30;
  int image_hw = 64;
  std::vector<std::array<float, 3>> palette;  // empty -> default colors

  void validate() const;  // throws ConfigError on invariant violations
  std::vector<std::array<float, 3>> resolved_palette() const;

  nlohmann::json to_json() const;
  static WorldConfig from_json(const nlohmann::json& j);  // strict keys
};

struct ObjectState {
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  double theta = 0;
  bool alive = true;   // still subject to dynamics (blocks freeze on ground)
  double spin = 0;     // blocktower tipping rate, sign = fall direction
  bool falling = false;
};

struct WorldState {
  std::vector<ObjectState> objects;
};

// Collision bookkeeping for the physics oracles.
struct CollisionEvent {
  int frame = 0;
  int a = -1, b = -1;  // b = -1 for wall bounces
  double momentum_before[2] = {0, 0};  // pair momentum (ball-ball only)
  double momentum_after[2] = {0, 0};
};

struct SimTrace {
  std::vector<CollisionEvent> events;
};

struct Episode {
  WorldConfig config;
  std::uint64_t seed = 0;
  int frame_count = 0;
  int object_count = 0;
  std::vector<Image> frames;   // [T], each (3,H,W)
  std::vector<double> states;  // [T,N,5] = (x, y, vx, vy, theta)

  double state(int t, int n, int k) const {
    return states[(static_cast<std::size_t>(t) * object_count + n) * 5 + k];
  }
  double& state(int t, int n, int k) {
    return states[(static_cast<std::size_t>(t) * object_count + n) * 5 + k];
  }
};

// --- simulation ---
WorldState initial_balls_state(const WorldConfig& cfg, Rng& rng);
WorldState initial_blocktower_state(const WorldConfig& cfg, Rng& rng);
// One frame step; pure given (state, cfg), optional event trace.
void step_balls(WorldState& s, const WorldConfig& cfg, int frame = 0,
                SimTrace* trace = nullptr);
void step_blocktower(WorldState& s, const WorldConfig& cfg);

Episode simulate_balls(const WorldConfig& cfg, std::uint64_t seed,
                       SimTrace* trace = nullptr);
Episode simulate_blocktower(const WorldConfig& cfg, std::uint64_t seed);
Episode simulate(const WorldConfig& cfg, std::uint64_t seed);

// --- rendering ---
Image render_state(const WorldState& s, const WorldConfig& cfg);
// World <-> pixel mapping (n = image side): -1 -> 0, +1 -> n-1.
inline double world_to_px(double x, int n) { return (x + 1.0) * 0.5 * (n - 1); }
inline double px_to_world(double p, int n) { return p / (n - 1) * 2.0 - 1.0; }

// Episodes carry velocity changes only at collisions; true in the balls
// scenario, used to find held-out clips containing collision events.
bool has_collision_between(const Episode& ep, int t_begin, int t_end);

// --- episode container ---
void write_episode(const std::string& path, const Episode& ep);
Episode read_episode(const std::string& path);

// --- dataset manifest ---
struct ManifestEntry {
  std::string file;
  std::string split;  // train | val | test
  std::uint64_t seed = 0;
};

struct Manifest {
  int format_version = 1;
  WorldConfig config;
  int n_keypoints = 0;  // equals the object count of the dataset
  std::vector<ManifestEntry> episodes;

  std::vector<std::string> files_for_split(const std::string& split) const;
};

void write_manifest(const std::string& dir, const Manifest& m);
Manifest read_manifest(const std::string& dir);

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};

// Writes one .epi file per episode plus manifest.json. Episode i uses the
// derived seed splitmix(master_seed, i), so directories are reproducible and
// episodes may be generated in parallel by distinct seeds.
void generate_dataset(const WorldConfig& cfg, const std::string& out_dir,
                      std::uint64_t master_seed, const SplitCounts& split,
                      bool force);

}  // namespace ovp::physim
