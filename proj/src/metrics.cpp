#include "ovp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ovp/jsonutil.hpp"
#include "ovp/physim.hpp"
#include "ovp/rng.hpp"

namespace ovp::metrics {

namespace {

void check_same_size(const Image& a, const Image& b, const char* op) {
  check_data(a.c == b.c && a.h == b.h && a.w == b.w,
             std::string(op) + ": image shape mismatch");
}

}  // namespace

double image_mse(const Image& a, const Image& b) {
  check_same_size(a, b, "image_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double ssim(const Image& a, const Image& b) {
  check_same_size(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;  // (k1 * L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;
  check_data(a.h >= kWin && a.w >= kWin,
             "ssim: window error, image smaller than 11x11 window");
  double win[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - kWin / 2, dj = j - kWin / 2;
      win[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += win[i][j];
    }
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) win[i][j] /= wsum;

  double total = 0.0;
  long count = 0;
  for (int ch = 0; ch < a.c; ++ch)
    for (int i0 = 0; i0 + kWin <= a.h; ++i0)
      for (int j0 = 0; j0 + kWin <= a.w; ++j0) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            double w = win[i][j];
            double x = a.at(ch, i0 + i, j0 + j);
            double y = b.at(ch, i0 + i, j0 + j);
            mx += w * x;
            my += w * y;
            mxx += w * x * x;
            myy += w * y * y;
            mxy += w * x * y;
          }
        double vx = mxx - mx * mx;
        double vy = myy - my * my;
        double cxy = mxy - mx * my;
        double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
        double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
        total += num / den;
        ++count;
      }
  return total / static_cast<double>(count);
}

double local_psnr(const Image& a, const Image& b,
                  const std::vector<Point>& object_positions_world,
                  int window_px) {
  check_same_size(a, b, "local_psnr");
  check_data(!object_positions_world.empty(),
             "local_psnr: undefined region, no object positions given");
  check_config(window_px >= 2, "local_psnr: window must be >= 2 px");
  std::vector<char> mask(static_cast<std::size_t>(a.h) * a.w, 0);
  int half = window_px / 2;
  for (const Point& p : object_positions_world) {
    int cx = static_cast<int>(std::lround(physim::world_to_px(p[0], a.w)));
    int cy = static_cast<int>(std::lround(physim::world_to_px(p[1], a.h)));
    int i0 = std::clamp(cy - half, 0, a.h - 1);
    int i1 = std::clamp(cy + half - 1, 0, a.h - 1);
    int j0 = std::clamp(cx - half, 0, a.w - 1);
    int j1 = std::clamp(cx + half - 1, 0, a.w - 1);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        mask[static_cast<std::size_t>(i) * a.w + j] = 1;
  }
  double s = 0.0;
  long count = 0;
  for (int i = 0; i < a.h; ++i)
    for (int j = 0; j < a.w; ++j) {
      if (!mask[static_cast<std::size_t>(i) * a.w + j]) continue;
      for (int ch = 0; ch < a.c; ++ch) {
        double d = static_cast<double>(a.at(ch, i, j)) -
                   static_cast<double>(b.at(ch, i, j));
        s += d * d;
        ++count;
      }
    }
  double mse = s / static_cast<double>(count);
  if (mse < 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

RandomConvEmbedder::RandomConvEmbedder(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xE3B));
  auto init = [&](std::vector<int> shape, int fan_in) {
    nn::Tensor t(std::move(shape));
    double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = sd * rng.normal();
    return t;
  };
  w1_ = init({8, 3, 3, 3}, 27);
  b1_ = nn::Tensor({8});
  w2_ = init({8, 8, 3, 3}, 72);
  b2_ = nn::Tensor({8});
}

nn::Tensor RandomConvEmbedder::embed(const Image& img) const {
  // conv3x3 (pad 1) + tanh, then conv3x3 stride 2 + tanh.
  auto conv = [](const nn::Tensor& x, const nn::Tensor& w, const nn::Tensor& b,
                 int stride) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int O = w.dim(0), k = w.dim(2);
    int pad = 1;
    int OH = (H + 2 * pad - k) / stride + 1;
    int OW = (W + 2 * pad - k) / stride + 1;
    nn::Tensor out({O, OH, OW});
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < OH; ++i)
        for (int j = 0; j < OW; ++j) {
          double acc = b(o);
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                int ii = i * stride - pad + ki;
                int jj = j * stride - pad + kj;
                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                acc += w(o, c, ki, kj) * x(c, ii, jj);
              }
          out(o, i, j) = std::tanh(acc);
        }
    return out;
  };
  nn::Tensor x = image_to_tensor(img);
  nn::Tensor h = conv(x, w1_, b1_, 1);
  return conv(h, w2_, b2_, 2);
}

double perceptual_distance(const Image& a, const Image& b, const Embedder& e) {
  nn::Tensor fa = e.embed(a);
  nn::Tensor fb = e.embed(b);
  check_data(fa.shape == fb.shape,
             "perceptual_distance: embedder output shape mismatch");
  check_data(fa.ndim() == 3, "perceptual_distance: embedder must return [C,H,W]");
  int C = fa.dim(0), H = fa.dim(1), W = fa.dim(2);
  // Unit-normalize the channel vector at each spatial position.
  auto normalize = [&](nn::Tensor& f) {
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double n2 = 0.0;
        for (int c = 0; c < C; ++c) n2 += f(c, i, j) * f(c, i, j);
        double inv = 1.0 / (std::sqrt(n2) + 1e-12);
        for (int c = 0; c < C; ++c) f(c, i, j) *= inv;
      }
  };
  normalize(fa);
  normalize(fb);
  double s = 0.0;
  for (std::int64_t i = 0; i < fa.size(); ++i) {
    double d = fa.data[i] - fb.data[i];
    s += d * d;
  }
  return s / static_cast<double>(fa.size());
}

double trajectory_mse(const std::vector<std::vector<Point>>& pred,
                      const std::vector<std::vector<Point>>& gt) {
  check_data(pred.size() == gt.size() && !pred.empty(),
             "trajectory_mse: shape mismatch in timesteps");
  double s = 0.0;
  long count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    check_data(pred[t].size() == gt[t].size(),
               "trajectory_mse: shape mismatch in objects");
    for (std::size_t n = 0; n < pred[t].size(); ++n) {
      double dx = pred[t][n][0] - gt[t][n][0];
      double dy = pred[t][n][1] - gt[t][n][1];
      s += dx * dx + dy * dy;
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

std::vector<int> match_keypoints(const std::vector<Point>& keypoints,
                                 const std::vector<Point>& gt_centers) {
  check_data(keypoints.size() == gt_centers.size(),
             "match_keypoints: count mismatch");
  int n = static_cast<int>(keypoints.size());
  check_data(n >= 1, "match_keypoints: empty input");
  // Hungarian algorithm with potentials (rows = keypoints, cols = gt).
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dx = keypoints[i][0] - gt_centers[j][0];
      double dy = keypoints[i][1] - gt_centers[j][1];
      cost[i][j] = dx * dx + dy * dy;
    }
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> perm(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) perm[p[j] - 1] = j - 1;
  return perm;
}

namespace {
double mean_range(const std::vector<double>& v, std::size_t a, std::size_t b) {
  check_data(b > a && b <= v.size(), "report: bad mean range");
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += v[i];
  return s / static_cast<double>(b - a);
}
}  // namespace

double MetricReport::mean_full(const std::string& name) const {
  const auto& v = per_frame.at(name);
  return mean_range(v, 0, v.size());
}

double MetricReport::mean_first(const std::string& name) const {
  const auto& v = per_frame.at(name);
  return mean_range(v, 0, std::min<std::size_t>(split_point, v.size()));
}

double MetricReport::mean_second(const std::string& name) const {
  const auto& v = per_frame.at(name);
  return mean_range(v, std::min<std::size_t>(split_point, v.size()), v.size());
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "ovp-metric-report";
  j["metadata"] = metadata;
  j["split_point"] = split_point;
  nlohmann::json pf;
  nlohmann::json avgs;
  for (const auto& [name, vals] : per_frame) {
    pf[name] = vals;
    avgs[name] = {{"full", mean_full(name)},
                  {"first", mean_first(name)},
                  {"second", mean_second(name)}};
  }
  j["per_frame"] = pf;
  j["averages"] = avgs;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  check_data(json_get<std::string>(j, "kind", "") == "ovp-metric-report",
             "report: not a metric report");
  MetricReport r;
  r.metadata = json_get<nlohmann::json>(j, "metadata", nlohmann::json::object());
  r.split_point = json_require<int>(j, "split_point", "report");
  auto pf = json_require<nlohmann::json>(j, "per_frame", "report");
  for (auto it = pf.begin(); it != pf.end(); ++it)
    r.per_frame[it.key()] = it.value().get<std::vector<double>>();
  return r;
}

void write_report(const std::string& path, const MetricReport& r) {
  std::ofstream f(path);
  check_data(f.good(), "report: cannot open for writing: " + path);
  f << r.to_json().dump(2) << "\n";
}

MetricReport read_report(const std::string& path) {
  std::ifstream f(path);
  check_data(f.good(), "report: cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception&) {
    throw DataError("report: invalid JSON in " + path);
  }
  return MetricReport::from_json(j);
}

}  // namespace ovp::metrics
