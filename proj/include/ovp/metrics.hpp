#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovp/image.hpp"
#include "ovp/tensor.hpp"

namespace ovp::metrics {

using Point = std::array<double, 2>;

double image_mse(const Image& a, const Image& b);

// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// dynamic range 1.0, valid window positions, mean over windows and channels.
double ssim(const Image& a, const Image& b);

// PSNR over the union of window x window crops centered at the objects'
// ground-truth positions (world coords); capped at 100 dB for MSE < 1e-10.
double local_psnr(const Image& a, const Image& b,
                  const std::vector<Point>& object_positions_world,
                  int window_px);

struct Embedder {
  virtual ~Embedder() = default;
  virtual nn::Tensor embed(const Image& img) const = 0;
};

// Fixed-seed random two-stage convolutional embedder; stands in for a learned
// perceptual network behind the same interface.
class RandomConvEmbedder : public Embedder {
 public:
  explicit RandomConvEmbedder(std::uint64_t seed);
  nn::Tensor embed(const Image& img) const override;

 private:
  nn::Tensor w1_, b1_, w2_, b2_;
};

// Mean squared distance between channel-unit-normalized feature stacks.
double perceptual_distance(const Image& a, const Image& b, const Embedder& e);

// Mean over objects and timesteps of squared position error (world coords^2).
// pred/gt indexed [t][n].
double trajectory_mse(const std::vector<std::vector<Point>>& pred,
                      const std::vector<std::vector<Point>>& gt);

// Minimum-total-squared-distance assignment; perm[i] is the gt index matched
// to keypoint i (Hungarian algorithm, O(n^3)).
std::vector<int> match_keypoints(const std::vector<Point>& keypoints,
                                 const std::vector<Point>& gt_centers);

struct MetricReport {
  nlohmann::json metadata;
  int split_point = 0;  // frames [0, split) vs [split, end)
  std::map<std::string, std::vector<double>> per_frame;

  double mean_full(const std::string& name) const;
  double mean_first(const std::string& name) const;   // [0, split)
  double mean_second(const std::string& name) const;  // [split, end)

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

void write_report(const std::string& path, const MetricReport& r);
MetricReport read_report(const std::string& path);

}  // namespace ovp::metrics
