#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ovp/error.hpp"
#include "ovp/metrics.hpp"
#include "ovp/physim.hpp"
#include "ovp/rng.hpp"

using namespace ovp;
using namespace ovp::metrics;

namespace {

Image random_frame(int hw, std::uint64_t seed) {
  Rng rng(seed);
  Image img(3, hw, hw);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

double brute_force_min_cost(const std::vector<Point>& kp,
                            const std::vector<Point>& gt) {
  int n = static_cast<int>(kp.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      double dx = kp[i][0] - gt[perm[i]][0];
      double dy = kp[i][1] - gt[perm[i]][1];
      cost += dx * dx + dy * dy;
    }
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double assignment_cost(const std::vector<Point>& kp,
                       const std::vector<Point>& gt,
                       const std::vector<int>& perm) {
  double cost = 0.0;
  for (std::size_t i = 0; i < kp.size(); ++i) {
    double dx = kp[i][0] - gt[perm[i]][0];
    double dy = kp[i][1] - gt[perm[i]][1];
    cost += dx * dx + dy * dy;
  }
  return cost;
}

}  // namespace

TEST_CASE("image mse basics") {
  Image a = random_frame(32, 1);
  CHECK(image_mse(a, a) == 0.0);
  Image b = a;
  for (float& v : b.data) v += 0.1f;
  CHECK(image_mse(a, b) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(image_mse(a, b) == image_mse(b, a));
  Image c(3, 16, 16);
  CHECK_THROWS_AS(image_mse(a, c), DataError);
}

TEST_CASE("ssim: identity, constant contrast, symmetry") {
  Image a = random_frame(32, 2);
  CHECK(ssim(a, a) == 1.0);

  Image zero(3, 32, 32);
  Image one(3, 32, 32);
  std::fill(one.data.begin(), one.data.end(), 1.f);
  double v = ssim(zero, one);
  CHECK(v < 0.01);
  // Closed form for two constants: C1 / (1 + C1).
  double c1 = 0.01 * 0.01;
  CHECK(v == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));

  Image b = random_frame(32, 3);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

  Image tiny(3, 8, 8);
  CHECK_THROWS_AS(ssim(tiny, tiny), DataError);
}

TEST_CASE("local psnr: caps, locality, exact value") {
  Image a = random_frame(64, 4);
  std::vector<Point> center = {{0.0, 0.0}};

  SUBCASE("identical crops hit the cap") {
    CHECK(local_psnr(a, a, center, 16) == 100.0);
  }
  SUBCASE("differences outside every crop keep the cap") {
    Image b = a;
    // Corrupt a far corner, outside the 16 px window around the center.
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        for (int c = 0; c < 3; ++c) b.at(c, i, j) = 1.f - b.at(c, i, j);
    CHECK(image_mse(a, b) > 0.0);
    CHECK(local_psnr(a, b, center, 16) == 100.0);
  }
  SUBCASE("union MSE of 1e-2 gives 20 dB") {
    Image b = a;
    int cx = static_cast<int>(std::lround(physim::world_to_px(0.0, 64)));
    for (int i = cx - 8; i < cx + 8; ++i)
      for (int j = cx - 8; j < cx + 8; ++j)
        for (int c = 0; c < 3; ++c) b.at(c, i, j) += 0.1f;
    CHECK(local_psnr(a, b, center, 16) == doctest::Approx(20.0).epsilon(1e-4));
  }
  SUBCASE("no objects is an undefined-region error") {
    CHECK_THROWS_AS(local_psnr(a, a, {}, 16), DataError);
  }
}

TEST_CASE("perceptual distance: identity, symmetry, noise monotonicity") {
  RandomConvEmbedder emb(1234);
  Image a = random_frame(32, 5);
  CHECK(perceptual_distance(a, a, emb) == 0.0);

  Image b = random_frame(32, 6);
  CHECK(perceptual_distance(a, b, emb) ==
        doctest::Approx(perceptual_distance(b, a, emb)).epsilon(1e-12));

  // Fixed noise pattern at increasing amplitude.
  Rng rng(7);
  std::vector<float> noise(a.data.size());
  for (float& v : noise) v = static_cast<float>(rng.normal());
  double prev = 0.0;
  for (double amp : {0.05, 0.1, 0.2}) {
    Image noisy = a;
    for (std::size_t i = 0; i < noisy.data.size(); ++i)
      noisy.data[i] += static_cast<float>(amp) * noise[i];
    double d = perceptual_distance(a, noisy, emb);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("trajectory mse definition") {
  std::vector<std::vector<Point>> gt = {{{0.1, 0.2}, {0.5, -0.3}},
                                        {{0.2, 0.2}, {0.4, -0.2}}};
  CHECK(trajectory_mse(gt, gt) == 0.0);

  auto off = gt;
  for (auto& frame : off)
    for (auto& p : frame) p[0] += 0.1;
  CHECK(trajectory_mse(off, gt) == doctest::Approx(0.01).epsilon(1e-12));

  auto perm_pred = off;
  auto perm_gt = gt;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    std::swap(perm_pred[t][0], perm_pred[t][1]);
    std::swap(perm_gt[t][0], perm_gt[t][1]);
  }
  CHECK(trajectory_mse(perm_pred, perm_gt) ==
        doctest::Approx(trajectory_mse(off, gt)).epsilon(1e-15));

  std::vector<std::vector<Point>> bad = {{{0.0, 0.0}}};
  CHECK_THROWS_AS(trajectory_mse(bad, gt), DataError);
}

TEST_CASE("keypoint matching equals the brute-force minimum") {
  SUBCASE("identity and reversal") {
    std::vector<Point> gt = {{0.1, 0.1}, {-0.4, 0.2}, {0.6, -0.5}};
    auto id_perm = match_keypoints(gt, gt);
    CHECK(id_perm == std::vector<int>{0, 1, 2});
    std::vector<Point> rev(gt.rbegin(), gt.rend());
    auto rev_perm = match_keypoints(rev, gt);
    CHECK(rev_perm == std::vector<int>{2, 1, 0});
  }
  SUBCASE("jittered clouds recover the identity") {
    Rng rng(11);
    std::vector<Point> gt = {{-0.6, -0.6}, {0.6, -0.4}, {0.0, 0.7}};
    std::vector<Point> kp = gt;
    for (auto& p : kp) {
      p[0] += rng.uniform(-0.01, 0.01);
      p[1] += rng.uniform(-0.01, 0.01);
    }
    CHECK(match_keypoints(kp, gt) == std::vector<int>{0, 1, 2});
  }
  SUBCASE("random instances up to n = 6") {
    Rng rng(12);
    for (int n = 1; n <= 6; ++n)
      for (int rep = 0; rep < 10; ++rep) {
        std::vector<Point> kp(n), gt(n);
        for (int i = 0; i < n; ++i) {
          kp[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
          gt[i] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        }
        auto perm = match_keypoints(kp, gt);
        // Valid permutation
        std::vector<int> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) CHECK(sorted[i] == i);
        CHECK(assignment_cost(kp, gt, perm) ==
              doctest::Approx(brute_force_min_cost(kp, gt)).epsilon(1e-10));
      }
  }
  SUBCASE("count mismatch is an error") {
    std::vector<Point> a = {{0, 0}};
    std::vector<Point> b = {{0, 0}, {1, 1}};
    CHECK_THROWS_AS(match_keypoints(a, b), DataError);
  }
}

TEST_CASE("metric report: split means recompose and io round-trips") {
  MetricReport r;
  r.split_point = 10;
  Rng rng(13);
  std::vector<double> vals(20);
  for (double& v : vals) v = rng.uniform();
  r.per_frame["mse"] = vals;
  r.metadata = {{"dataset", "toy"}};

  double recomposed = 0.5 * (r.mean_first("mse") + r.mean_second("mse"));
  CHECK(std::abs(r.mean_full("mse") - recomposed) <= 1e-12);

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "ovp_metrics_test";
  fs::create_directories(dir);
  write_report((dir / "r.json").string(), r);
  MetricReport back = read_report((dir / "r.json").string());
  CHECK(back.split_point == r.split_point);
  CHECK(back.per_frame.at("mse") == vals);
  CHECK(back.metadata.at("dataset") == "toy");
}
