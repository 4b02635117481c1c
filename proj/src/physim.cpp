#include "ovp/physim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ovp/jsonutil.hpp"

namespace fs = std::filesystem;

namespace ovp::physim {

namespace {

constexpr float kBackgroundGray = 0.08f;
constexpr float kWallGray = 0.45f;
constexpr int kWallThicknessPx = 2;
constexpr int kMaxPlacementAttempts = 10000;
constexpr double kTippingRate = 0.08;  // rad per frame while a block falls

const std::vector<std::array<float, 3>> kDefaultPalette = {
    {0.90f, 0.16f, 0.16f}, {0.18f, 0.80f, 0.25f}, {0.25f, 0.45f, 0.95f},
    {0.95f, 0.85f, 0.20f}, {0.85f, 0.25f, 0.80f}, {0.20f, 0.85f, 0.85f},
    {0.95f, 0.55f, 0.15f}, {0.60f, 0.60f, 0.95f},
};

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& f, const std::string& field) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  check_data(f.good(), "episode container: truncated while reading " + field);
  return v;
}

}  // namespace

std::string scenario_name(Scenario s) {
  return s == Scenario::kBalls ? "balls" : "blocktower";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "balls") return Scenario::kBalls;
  if (name == "blocktower") return Scenario::kBlocktower;
  throw ConfigError("unknown scenario '" + name + "' (expected balls|blocktower)");
}

void WorldConfig::validate() const {
  check_config(num_objects >= 1, "world: num_objects must be >= 1");
  check_config(frames_per_episode >= 1, "world: frames_per_episode must be >= 1");
  check_config(image_hw >= 16, "world: image_hw must be >= 16");
  if (scenario == Scenario::kBalls) {
    check_config(ball_radius > 0.0 && ball_radius < 0.5,
                 "world: ball_radius must lie in (0, 0.5)");
    check_config(max_speed >= 0.0 && max_speed < ball_radius,
                 "world: max_speed must satisfy 0 <= max_speed < ball_radius");
    double per_ball_area = 4.0 * ball_radius * ball_radius;  // (2r)^2
    check_config(num_objects * per_ball_area < 4.0,
                 "world: objects do not fit the world extent");
  } else {
    check_config(block_size > 0.0 && block_size < 1.0,
                 "world: block_size must lie in (0, 1)");
    check_config(num_objects * block_size < 2.0,
                 "world: tower taller than the world extent");
    check_config(gravity >= 0.0, "world: gravity must be >= 0");
  }
  const auto pal = resolved_palette();
  check_config(static_cast<int>(pal.size()) >= num_objects,
               "world: palette smaller than num_objects");
  for (std::size_t i = 0; i < pal.size(); ++i)
    for (std::size_t j = i + 1; j < pal.size(); ++j)
      check_config(pal[i] != pal[j], "world: palette colors must be distinct");
}

std::vector<std::array<float, 3>> WorldConfig::resolved_palette() const {
  if (!palette.empty()) return palette;
  std::vector<std::array<float, 3>> out(
      kDefaultPalette.begin(),
      kDefaultPalette.begin() +
          std::min<std::size_t>(kDefaultPalette.size(),
                                std::max(1, num_objects)));
  return out;
}

nlohmann::json WorldConfig::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario_name(scenario);
  j["num_objects"] = num_objects;
  j["ball_radius"] = ball_radius;
  j["max_speed"] = max_speed;
  j["gravity"] = gravity;
  j["block_size"] = block_size;
  j["frames_per_episode"] = frames_per_episode;
  j["image_hw"] = image_hw;
  nlohmann::json pal = nlohmann::json::array();
  for (const auto& c : resolved_palette()) pal.push_back({c[0], c[1], c[2]});
  j["palette"] = pal;
  return j;
}

WorldConfig WorldConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"scenario", "num_objects", "ball_radius", "max_speed",
                       "gravity", "block_size", "frames_per_episode",
                       "image_hw", "palette"},
                      "world config");
  WorldConfig cfg;
  cfg.scenario =
      scenario_from_name(json_get<std::string>(j, "scenario", "balls"));
  cfg.num_objects = json_get<int>(j, "num_objects", cfg.num_objects);
  cfg.ball_radius = json_get<double>(j, "ball_radius", cfg.ball_radius);
  cfg.max_speed = json_get<double>(j, "max_speed", cfg.max_speed);
  cfg.gravity = json_get<double>(j, "gravity", cfg.gravity);
  cfg.block_size = json_get<double>(j, "block_size", cfg.block_size);
  cfg.frames_per_episode =
      json_get<int>(j, "frames_per_episode", cfg.frames_per_episode);
  cfg.image_hw = json_get<int>(j, "image_hw", cfg.image_hw);
  if (j.contains("palette")) {
    for (const auto& c : j.at("palette")) {
      check_config(c.is_array() && c.size() == 3,
                   "world config: palette entries must be [r,g,b]");
      cfg.palette.push_back({c[0].get<float>(), c[1].get<float>(), c[2].get<float>()});
    }
  }
  return cfg;
}

// ---------------- simulation ----------------

WorldState initial_balls_state(const WorldConfig& cfg, Rng& rng) {
  const double r = cfg.ball_radius;
  const double lo = -1.0 + r, hi = 1.0 - r;
  WorldState s;
  s.objects.resize(cfg.num_objects);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= kMaxPlacementAttempts)
      throw DataError("placement failure: could not place " +
                      std::to_string(cfg.num_objects) +
                      " balls without overlap after 10000 attempts");
    bool ok = true;
    for (int n = 0; n < cfg.num_objects && ok; ++n) {
      s.objects[n].x = rng.uniform(lo, hi);
      s.objects[n].y = rng.uniform(lo, hi);
      for (int m = 0; m < n; ++m) {
        double dx = s.objects[n].x - s.objects[m].x;
        double dy = s.objects[n].y - s.objects[m].y;
        if (dx * dx + dy * dy < (2.1 * r) * (2.1 * r)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) break;
  }
  for (int n = 0; n < cfg.num_objects; ++n) {
    double speed = cfg.max_speed * rng.uniform(0.5, 1.0);
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    s.objects[n].vx = speed * std::cos(ang);
    s.objects[n].vy = speed * std::sin(ang);
  }
  return s;
}

void step_balls(WorldState& s, const WorldConfig& cfg, int frame,
                SimTrace* trace) {
  const double r = cfg.ball_radius;
  const double lo = -1.0 + r, hi = 1.0 - r;
  const int n_obj = static_cast<int>(s.objects.size());
  for (int n = 0; n < n_obj; ++n) {
    ObjectState& o = s.objects[n];
    o.x += o.vx;
    o.y += o.vy;
    bool bounced = false;
    if (o.x < lo) { o.x = 2.0 * lo - o.x; o.vx = -o.vx; bounced = true; }
    if (o.x > hi) { o.x = 2.0 * hi - o.x; o.vx = -o.vx; bounced = true; }
    if (o.y < lo) { o.y = 2.0 * lo - o.y; o.vy = -o.vy; bounced = true; }
    if (o.y > hi) { o.y = 2.0 * hi - o.y; o.vy = -o.vy; bounced = true; }
    if (bounced && trace) {
      CollisionEvent ev;
      ev.frame = frame;
      ev.a = n;
      trace->events.push_back(ev);
    }
  }
  // Equal-mass elastic impulse along the center line, applied when two balls
  // overlap while approaching.
  for (int a = 0; a < n_obj; ++a)
    for (int b = a + 1; b < n_obj; ++b) {
      ObjectState& oa = s.objects[a];
      ObjectState& ob = s.objects[b];
      double dx = oa.x - ob.x, dy = oa.y - ob.y;
      double d2 = dx * dx + dy * dy;
      if (d2 >= 4.0 * r * r || d2 == 0.0) continue;
      double rvx = oa.vx - ob.vx, rvy = oa.vy - ob.vy;
      double approach = rvx * dx + rvy * dy;
      if (approach >= 0.0) continue;
      double t = approach / d2;
      CollisionEvent ev;
      if (trace) {
        ev.frame = frame;
        ev.a = a;
        ev.b = b;
        ev.momentum_before[0] = oa.vx + ob.vx;
        ev.momentum_before[1] = oa.vy + ob.vy;
      }
      oa.vx -= t * dx;
      oa.vy -= t * dy;
      ob.vx += t * dx;
      ob.vy += t * dy;
      if (trace) {
        ev.momentum_after[0] = oa.vx + ob.vx;
        ev.momentum_after[1] = oa.vy + ob.vy;
        trace->events.push_back(ev);
      }
    }
}

WorldState initial_blocktower_state(const WorldConfig& cfg, Rng& rng) {
  // Ground is y = -1; the tower grows upward (increasing y). Per-block
  // horizontal offsets relative to the block below make some towers unstable.
  const double L = cfg.block_size;
  WorldState s;
  s.objects.resize(cfg.num_objects);
  double x = 0.0;
  for (int k = 0; k < cfg.num_objects; ++k) {
    if (k > 0) x += rng.uniform(-0.55, 0.55) * L;
    s.objects[k].x = x;
    s.objects[k].y = -1.0 + (k + 0.5) * L;
  }
  return s;
}

void step_blocktower(WorldState& s, const WorldConfig& cfg) {
  const double L = cfg.block_size;
  const int n_obj = static_cast<int>(s.objects.size());
  // Support-interval scan, bottom-up. A block (with everything still resting
  // on it) starts to fall when the joint center of mass leaves the support
  // interval of the block below, or when its support has itself gone.
  for (int k = 1; k < n_obj; ++k) {
    ObjectState& o = s.objects[k];
    if (o.falling || !o.alive) continue;
    const ObjectState& below = s.objects[k - 1];
    bool support_gone = below.falling || !below.alive;
    double com = 0.0;
    int count = 0;
    for (int j = k; j < n_obj; ++j) {
      if (s.objects[j].falling || !s.objects[j].alive) break;
      com += s.objects[j].x;
      ++count;
    }
    com /= std::max(1, count);
    bool unsupported = support_gone || std::abs(com - below.x) > L / 2.0;
    if (unsupported) {
      o.falling = true;
      double dir = com - below.x;
      o.spin = kTippingRate * (dir < 0.0 ? -1.0 : 1.0);
    }
  }
  for (int k = 0; k < n_obj; ++k) {
    ObjectState& o = s.objects[k];
    if (!o.falling || !o.alive) continue;
    o.vy -= cfg.gravity;
    o.y += o.vy;
    o.x += o.vx;
    o.theta = std::fmod(o.theta + o.spin + 2.0 * M_PI, 2.0 * M_PI);
    if (o.y - L / 2.0 <= -1.0) {
      o.y = -1.0 + L / 2.0;
      o.vx = 0.0;
      o.vy = 0.0;
      o.falling = false;
      o.alive = false;  // ground contact stops motion
    }
  }
}

namespace {

Episode run_episode(const WorldConfig& cfg, std::uint64_t seed,
                    SimTrace* trace) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0xE01));
  WorldState s = cfg.scenario == Scenario::kBalls
                     ? initial_balls_state(cfg, rng)
                     : initial_blocktower_state(cfg, rng);
  Episode ep;
  ep.config = cfg;
  ep.seed = seed;
  ep.frame_count = cfg.frames_per_episode;
  ep.object_count = cfg.num_objects;
  ep.frames.reserve(cfg.frames_per_episode);
  ep.states.resize(static_cast<std::size_t>(cfg.frames_per_episode) *
                   cfg.num_objects * 5);
  for (int t = 0; t < cfg.frames_per_episode; ++t) {
    for (int n = 0; n < cfg.num_objects; ++n) {
      const ObjectState& o = s.objects[n];
      ep.state(t, n, 0) = o.x;
      ep.state(t, n, 1) = o.y;
      ep.state(t, n, 2) = o.vx;
      ep.state(t, n, 3) = o.vy;
      ep.state(t, n, 4) = o.theta;
    }
    ep.frames.push_back(render_state(s, cfg));
    if (t + 1 < cfg.frames_per_episode) {
      if (cfg.scenario == Scenario::kBalls)
        step_balls(s, cfg, t + 1, trace);
      else
        step_blocktower(s, cfg);
    }
  }
  return ep;
}

}  // namespace

Episode simulate_balls(const WorldConfig& cfg, std::uint64_t seed,
                       SimTrace* trace) {
  check_config(cfg.scenario == Scenario::kBalls,
               "simulate_balls: config scenario is not balls");
  return run_episode(cfg, seed, trace);
}

Episode simulate_blocktower(const WorldConfig& cfg, std::uint64_t seed) {
  check_config(cfg.scenario == Scenario::kBlocktower,
               "simulate_blocktower: config scenario is not blocktower");
  return run_episode(cfg, seed, nullptr);
}

Episode simulate(const WorldConfig& cfg, std::uint64_t seed) {
  return cfg.scenario == Scenario::kBalls ? simulate_balls(cfg, seed)
                                          : simulate_blocktower(cfg, seed);
}

// ---------------- rendering ----------------

Image render_state(const WorldState& s, const WorldConfig& cfg) {
  const int hw = cfg.image_hw;
  Image img(3, hw, hw);
  for (int i = 0; i < hw; ++i)
    for (int j = 0; j < hw; ++j) {
      int edge = std::min(std::min(i, j), std::min(hw - 1 - i, hw - 1 - j));
      float g = edge < kWallThicknessPx ? kWallGray : kBackgroundGray;
      img.at(0, i, j) = g;
      img.at(1, i, j) = g;
      img.at(2, i, j) = g;
    }
  const auto palette = cfg.resolved_palette();
  const double px_per_unit = (hw - 1) / 2.0;
  for (std::size_t n = 0; n < s.objects.size(); ++n) {
    const ObjectState& o = s.objects[n];
    const auto& color = palette[n % palette.size()];
    double cx = world_to_px(o.x, hw);
    double cy = world_to_px(o.y, hw);
    double half_px;
    if (cfg.scenario == Scenario::kBalls)
      half_px = cfg.ball_radius * px_per_unit;
    else
      half_px = cfg.block_size / 2.0 * px_per_unit;
    int pad = static_cast<int>(std::ceil(half_px * 1.5)) + 2;
    int i0 = std::max(0, static_cast<int>(std::floor(cy)) - pad);
    int i1 = std::min(hw - 1, static_cast<int>(std::ceil(cy)) + pad);
    int j0 = std::max(0, static_cast<int>(std::floor(cx)) - pad);
    int j1 = std::min(hw - 1, static_cast<int>(std::ceil(cx)) + pad);
    double c = std::cos(o.theta), sn = std::sin(o.theta);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        double dx = j - cx, dy = i - cy;
        double sdf;
        if (cfg.scenario == Scenario::kBalls) {
          sdf = std::sqrt(dx * dx + dy * dy) - half_px;
        } else {
          // signed distance of an oriented square (Chebyshev form)
          double u = c * dx + sn * dy;
          double v = -sn * dx + c * dy;
          sdf = std::max(std::abs(u), std::abs(v)) - half_px;
        }
        double alpha = std::clamp(0.5 - sdf, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) {
          float& px = img.at(ch, i, j);
          px = static_cast<float>(px * (1.0 - alpha) + color[ch] * alpha);
        }
      }
  }
  return img;
}

bool has_collision_between(const Episode& ep, int t_begin, int t_end) {
  int lo = std::max(1, t_begin);
  int hi = std::min(ep.frame_count - 1, t_end);
  for (int t = lo; t <= hi; ++t)
    for (int n = 0; n < ep.object_count; ++n)
      if (ep.state(t, n, 2) != ep.state(t - 1, n, 2) ||
          ep.state(t, n, 3) != ep.state(t - 1, n, 3))
        return true;
  return false;
}

// ---------------- episode container ----------------

static constexpr char kEpisodeMagic[4] = {'O', 'V', 'P', 'E'};
static constexpr std::uint32_t kEpisodeVersion = 1;

void write_episode(const std::string& path, const Episode& ep) {
  check_data(static_cast<int>(ep.frames.size()) == ep.frame_count,
             "episode: frames length does not match frame_count");
  check_data(static_cast<std::int64_t>(ep.states.size()) ==
                 static_cast<std::int64_t>(ep.frame_count) * ep.object_count * 5,
             "episode: states length does not match shape");
  std::ofstream f(path, std::ios::binary);
  check_data(f.good(), "episode: cannot open for writing: " + path);
  f.write(kEpisodeMagic, 4);
  write_u32(f, kEpisodeVersion);
  nlohmann::json header;
  header["frames_shape"] = {ep.frame_count, 3, ep.config.image_hw,
                            ep.config.image_hw};
  header["states_shape"] = {ep.frame_count, ep.object_count, 5};
  header["seed"] = ep.seed;
  header["config"] = ep.config.to_json();
  std::string hs = header.dump();
  write_u32(f, static_cast<std::uint32_t>(hs.size()));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Image& img : ep.frames) {
    check_data(img.c == 3 && img.h == ep.config.image_hw &&
                   img.w == ep.config.image_hw,
               "episode: frame has wrong shape");
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  }
  f.write(reinterpret_cast<const char*>(ep.states.data()),
          static_cast<std::streamsize>(ep.states.size() * sizeof(double)));
  check_data(f.good(), "episode: write failed: " + path);
}

Episode read_episode(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_data(f.good(), "episode: cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  check_data(f.good() && std::memcmp(magic, kEpisodeMagic, 4) == 0,
             "episode container: bad magic header in " + path);
  std::uint32_t version = read_u32(f, "version");
  check_data(version == kEpisodeVersion,
             "episode container: unsupported version " +
                 std::to_string(version) + " (expected " +
                 std::to_string(kEpisodeVersion) + ")");
  std::uint32_t hlen = read_u32(f, "header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  check_data(f.good(), "episode container: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception&) {
    throw DataError("episode container: header is not valid JSON");
  }
  auto fshape = json_require<std::vector<int>>(header, "frames_shape",
                                               "episode container");
  auto sshape = json_require<std::vector<int>>(header, "states_shape",
                                               "episode container");
  check_data(fshape.size() == 4 && fshape[1] == 3,
             "episode container: field frames_shape must be [T,3,H,W]");
  check_data(sshape.size() == 3 && sshape[2] == 5,
             "episode container: field states_shape must be [T,N,5]");
  check_data(fshape[0] == sshape[0],
             "episode container: invariant violation, frames length " +
                 std::to_string(fshape[0]) + " != states length " +
                 std::to_string(sshape[0]));
  Episode ep;
  ep.config = WorldConfig::from_json(
      json_require<nlohmann::json>(header, "config", "episode container"));
  ep.seed = json_require<std::uint64_t>(header, "seed", "episode container");
  ep.frame_count = fshape[0];
  ep.object_count = sshape[1];
  check_data(fshape[2] == ep.config.image_hw && fshape[3] == ep.config.image_hw,
             "episode container: field frames_shape disagrees with config");
  ep.frames.reserve(ep.frame_count);
  for (int t = 0; t < ep.frame_count; ++t) {
    Image img(3, fshape[2], fshape[3]);
    f.read(reinterpret_cast<char*>(img.data.data()),
           static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    check_data(f.good(), "episode container: frames payload truncated at t=" +
                             std::to_string(t));
    ep.frames.push_back(std::move(img));
  }
  ep.states.resize(static_cast<std::size_t>(ep.frame_count) *
                   ep.object_count * 5);
  f.read(reinterpret_cast<char*>(ep.states.data()),
         static_cast<std::streamsize>(ep.states.size() * sizeof(double)));
  check_data(f.good(), "episode container: states payload truncated");
  f.peek();
  check_data(f.eof(), "episode container: trailing bytes after states payload");
  return ep;
}

// ---------------- manifest ----------------

std::vector<std::string> Manifest::files_for_split(
    const std::string& split) const {
  std::vector<std::string> out;
  for (const ManifestEntry& e : episodes)
    if (e.split == split) out.push_back(e.file);
  return out;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["kind"] = "ovp-dataset";
  j["config"] = m.config.to_json();
  j["n_keypoints"] = m.n_keypoints;
  nlohmann::json eps = nlohmann::json::array();
  for (const ManifestEntry& e : m.episodes)
    eps.push_back({{"file", e.file}, {"split", e.split}, {"seed", e.seed}});
  j["episodes"] = eps;
  std::ofstream f(fs::path(dir) / "manifest.json");
  check_data(f.good(), "manifest: cannot open for writing in " + dir);
  f << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  check_data(f.good(), "manifest: missing manifest.json in " + dir);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception&) {
    throw DataError("manifest: invalid JSON in " + dir);
  }
  check_data(json_get<std::string>(j, "kind", "") == "ovp-dataset",
             "manifest: not an ovp dataset manifest");
  check_data(json_get<int>(j, "format_version", -1) == 1,
             "manifest: unsupported format_version");
  Manifest m;
  m.config = WorldConfig::from_json(
      json_require<nlohmann::json>(j, "config", "manifest"));
  m.n_keypoints = json_require<int>(j, "n_keypoints", "manifest");
  for (const auto& e : json_require<nlohmann::json>(j, "episodes", "manifest")) {
    ManifestEntry me;
    me.file = json_require<std::string>(e, "file", "manifest episode");
    me.split = json_require<std::string>(e, "split", "manifest episode");
    me.seed = json_require<std::uint64_t>(e, "seed", "manifest episode");
    m.episodes.push_back(std::move(me));
  }
  return m;
}

void generate_dataset(const WorldConfig& cfg, const std::string& out_dir,
                      std::uint64_t master_seed, const SplitCounts& split,
                      bool force) {
  cfg.validate();
  check_config(split.train >= 0 && split.val >= 0 && split.test >= 0 &&
                   split.train + split.val + split.test > 0,
               "generate: empty split");
  fs::path dir(out_dir);
  if (fs::exists(dir)) {
    bool empty = fs::is_directory(dir) && fs::is_empty(dir);
    check_config(empty || force,
                 "generate: output directory exists and is not empty "
                 "(use --force to overwrite): " + out_dir);
    if (!empty && force) fs::remove_all(dir);
  }
  fs::create_directories(dir);
  Manifest m;
  m.config = cfg;
  m.n_keypoints = cfg.num_objects;
  int total = split.train + split.val + split.test;
  for (int i = 0; i < total; ++i) {
    std::uint64_t ep_seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    Episode ep = simulate(cfg, ep_seed);
    char name[32];
    std::snprintf(name, sizeof(name), "ep_%06d.epi", i);
    write_episode((dir / name).string(), ep);
    ManifestEntry e;
    e.file = name;
    e.seed = ep_seed;
    e.split = i < split.train ? "train"
              : i < split.train + split.val ? "val"
                                            : "test";
    m.episodes.push_back(std::move(e));
  }
  write_manifest(out_dir, m);
}

}  // namespace ovp::physim
