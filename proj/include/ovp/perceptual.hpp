#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovp/checkpoint.hpp"
#include "ovp/image.hpp"
#include "ovp/nn.hpp"
#include "ovp/physim.hpp"

namespace ovp::perceptual {

struct PerceptualConfig {
  int n_keypoints = 2;   // N, set to the object count of the dataset
  int n_coeffs = 4;      // C rotation coefficients
  double sigma = 0.1;    // Gaussian std-dev in world units
  double lambda = 1.0;   // gradient-difference loss weight
  int image_hw = 64;
  int latent_hw = 16;    // H' = W'; image_hw must equal 4 * latent_hw
  int feat_channels = 32;  // C'
  int enc_width = 32;
  int dec_width = 64;
  double lr = 5e-4;
  int batch = 16;
  int epochs = 30;
  int patience = 10;      // epochs without val improvement before halving lr
  int pairs_per_episode = 4;
  std::uint64_t seed = 0;

  int pose_dim() const { return 3 + n_coeffs; }
  void validate() const;
  nlohmann::json to_json() const;
  static PerceptualConfig from_json(const nlohmann::json& j);
};

// Latent grid centers, endpoint-inclusive on [-1,1].
std::vector<double> grid_coords(int n);

// C fixed 3x3 kernels: first-order directional-derivative stencils cycling
// through 0/45/90/135 degrees, applied as cross-correlation.
nn::Tensor default_kernel_bank(int n_coeffs);

// Direct (non-tape) evaluation of the isotropic Gaussian map
//   G(i,j) = s * exp(-||u(i,j) - p||^2 / (2 sigma^2)).
nn::Tensor isotropic_gaussian(double px, double py, double s, double sigma,
                              const std::vector<double>& gx,
                              const std::vector<double>& gy);

// Spatial softmax + coordinate expectation: scores [B,N,H,W] -> [B,N,2].
nn::Var spatial_softmax(nn::Tape& t, nn::Var heatmaps,
                        const std::vector<double>& gx,
                        const std::vector<double>& gy);

struct PerceptualParams {
  PerceptualConfig cfg;
  nn::Tensor kernel_bank;  // fixed, not learned

  // encoder: feature / position / coefficient branches
  nn::Conv2d feat1, feat2, feat3;
  nn::Conv2d pos1, pos2, pos3;
  nn::Conv2d coef1, coef2, coef3;
  // decoder
  nn::Conv2d dec1, dec2, dec3, dec4;

  PerceptualParams() = default;
  explicit PerceptualParams(const PerceptualConfig& cfg);

  std::vector<nn::ParamRef> param_refs();
  std::vector<nn::Tensor> snapshot() const;
  void restore(const std::vector<nn::Tensor>& snap);
};

struct EncodeOut {
  nn::Var fmap;       // [B,C',H',W']
  nn::Var heatmaps;   // normalized, [B,N,H',W']
  nn::Var positions;  // [B,N,2]
  nn::Var scales;     // [B,N]
  nn::Var rots;       // [B,N,C]
  nn::Var poses;      // [B,N,3+C] = (p, s, r)
};

// Feature branch only (reference frames need nothing else).
nn::Var encode_features(nn::Tape& t, const nn::Bound& bp,
                        const PerceptualParams& p, nn::Var images);
EncodeOut encode(nn::Tape& t, const nn::Bound& bp, const PerceptualParams& p,
                 nn::Var images);

// Gaussian stack G_n^i = r_n^i * (K^i * Gbar_n): [B, N*C, H', W'].
nn::Var gaussian_stack(nn::Tape& t, nn::Var positions, nn::Var scales,
                       nn::Var rots, const nn::Tensor& bank, double sigma,
                       const std::vector<double>& gx,
                       const std::vector<double>& gy);
nn::Var build_gaussian_stack(nn::Tape& t, const PerceptualParams& p,
                             nn::Var positions, nn::Var scales, nn::Var rots);

nn::Var decode(nn::Tape& t, const nn::Bound& bp, const PerceptualParams& p,
               nn::Var fmap_ref, nn::Var gstack_tgt);

// Pixel MSE + lambda * Sobel-gradient MSE, both mean-reduced; the Sobel term
// is evaluated on the valid interior.
nn::Var perceptual_loss(nn::Tape& t, nn::Var target, nn::Var recon,
                        double lambda);

struct SequenceStates {
  nn::Tensor feature_map;  // [C',H',W'] from the first frame
  nn::Tensor poses;        // [T,N,3+C]
};

SequenceStates extract_state_sequence(PerceptualParams& p,
                                      const std::vector<Image>& frames);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, val_loss = 0, val_mse = 0, lr = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_loss = 0;
  double best_val_mse = 0;
  int best_epoch = -1;
};

// Dataset access used by both training phases.
struct LoadedDataset {
  physim::Manifest manifest;
  std::vector<physim::Episode> train, val, test;
};
LoadedDataset load_dataset(const std::string& dir);

TrainResult train_perceptual(PerceptualParams& params,
                             const LoadedDataset& data);

void save_perceptual(const std::string& path, PerceptualParams& params);
PerceptualParams load_perceptual(const std::string& path);

}  // namespace ovp::perceptual
