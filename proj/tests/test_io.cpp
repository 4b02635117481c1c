#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ovp/checkpoint.hpp"
#include "ovp/error.hpp"
#include "ovp/physim.hpp"

using namespace ovp;
using namespace ovp::physim;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "ovp_io_test";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

WorldConfig small_cfg() {
  WorldConfig cfg;
  cfg.scenario = Scenario::kBalls;
  cfg.num_objects = 2;
  cfg.frames_per_episode = 30;
  cfg.image_hw = 64;
  return cfg;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("episode container round-trips byte-exactly") {
  fs::path dir = temp_dir();
  Episode ep = simulate(small_cfg(), 123);
  fs::path file = dir / "ep.epi";
  write_episode(file.string(), ep);
  Episode back = read_episode(file.string());
  CHECK(back.frame_count == ep.frame_count);
  CHECK(back.object_count == ep.object_count);
  CHECK(back.seed == ep.seed);
  CHECK(back.states == ep.states);  // float64 bit-exact
  for (int t = 0; t < ep.frame_count; ++t)
    CHECK(back.frames[t].data == ep.frames[t].data);  // float32 bit-exact

  // Writing the reread episode reproduces the same bytes.
  fs::path file2 = dir / "ep2.epi";
  write_episode(file2.string(), back);
  CHECK(read_bytes(file) == read_bytes(file2));
}

TEST_CASE("corrupt containers are rejected with a named field") {
  fs::path dir = temp_dir();
  Episode ep = simulate(small_cfg(), 7);
  fs::path file = dir / "ep.epi";
  write_episode(file.string(), ep);

  SUBCASE("wrong magic") {
    auto bytes = read_bytes(file);
    bytes[0] = 'X';
    std::ofstream(dir / "bad.epi", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(read_episode((dir / "bad.epi").string()),
                         doctest::Contains("magic"), DataError);
  }
  SUBCASE("truncated payload") {
    auto bytes = read_bytes(file);
    bytes.resize(bytes.size() - 257);
    std::ofstream(dir / "trunc.epi", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_episode((dir / "trunc.epi").string()), DataError);
  }
  SUBCASE("frames/states length mismatch") {
    // Hand-build a header whose frames and states shapes disagree.
    nlohmann::json header;
    header["frames_shape"] = {3, 3, 64, 64};
    header["states_shape"] = {4, 2, 5};
    header["seed"] = 0;
    header["config"] = small_cfg().to_json();
    std::string hs = header.dump();
    std::ofstream f(dir / "mismatch.epi", std::ios::binary);
    f.write("OVPE", 4);
    std::uint32_t version = 1, hlen = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<char*>(&version), 4);
    f.write(reinterpret_cast<char*>(&hlen), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    f.close();
    CHECK_THROWS_WITH_AS(read_episode((dir / "mismatch.epi").string()),
                         doctest::Contains("invariant"), DataError);
  }
  SUBCASE("unsupported version") {
    auto bytes = read_bytes(file);
    bytes[4] = 9;
    std::ofstream(dir / "ver.epi", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(read_episode((dir / "ver.epi").string()),
                         doctest::Contains("version"), DataError);
  }
}

TEST_CASE("dataset generation writes manifest plus episodes deterministically") {
  fs::path dir = temp_dir();
  WorldConfig cfg = small_cfg();
  cfg.frames_per_episode = 10;
  SplitCounts split{4, 2, 2};
  generate_dataset(cfg, (dir / "d1").string(), 99, split, false);
  generate_dataset(cfg, (dir / "d2").string(), 99, split, false);

  Manifest m = read_manifest((dir / "d1").string());
  CHECK(m.episodes.size() == 8);
  CHECK(m.n_keypoints == cfg.num_objects);
  CHECK(m.files_for_split("train").size() == 4);
  CHECK(m.files_for_split("val").size() == 2);
  CHECK(m.files_for_split("test").size() == 2);

  for (const auto& e : m.episodes)
    CHECK(read_bytes(dir / "d1" / e.file) == read_bytes(dir / "d2" / e.file));
  CHECK(read_bytes(dir / "d1" / "manifest.json") ==
        read_bytes(dir / "d2" / "manifest.json"));

  // Refuses to overwrite without force.
  CHECK_THROWS_AS(
      generate_dataset(cfg, (dir / "d1").string(), 99, split, false),
      ConfigError);
  generate_dataset(cfg, (dir / "d1").string(), 100, split, true);
  Manifest m2 = read_manifest((dir / "d1").string());
  CHECK(m2.episodes[0].seed != m.episodes[0].seed);
}

TEST_CASE("checkpoint envelope round-trips named arrays") {
  fs::path dir = temp_dir();
  nn::Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  nn::Tensor b({4}, {0.5, -0.5, 0.25, 0.0});
  std::vector<nn::ParamRef> refs = {{"layer.w", &a}, {"layer.b", &b}};
  nlohmann::json hyper = {{"lr", 5e-4}, {"n", 2}};
  fs::path file = dir / "test.ckpt";
  save_checkpoint(file.string(), "perceptual", hyper, refs);

  LoadedCheckpoint ck = load_checkpoint(file.string());
  CHECK(ck.kind == "perceptual");
  CHECK(ck.hyper.at("n") == 2);
  CHECK(ck.arrays.at("layer.w").data == a.data);
  CHECK(ck.arrays.at("layer.b").data == b.data);

  nn::Tensor a2({2, 3});
  nn::Tensor b2({4});
  std::vector<nn::ParamRef> refs2 = {{"layer.w", &a2}, {"layer.b", &b2}};
  assign_params(ck, refs2);
  CHECK(a2.data == a.data);
  CHECK(b2.data == b.data);

  nn::Tensor wrong({3, 2});
  std::vector<nn::ParamRef> refs3 = {{"layer.w", &wrong}, {"layer.b", &b2}};
  CHECK_THROWS_AS(assign_params(ck, refs3), DataError);

  auto bytes = read_bytes(file);
  bytes[1] = 'x';
  std::ofstream(dir / "bad.ckpt", std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), DataError);
}
