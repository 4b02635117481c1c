#pragma once

#include <string>
#include <vector>

#include "ovp/tensor.hpp"

namespace ovp {

// CHW float32 raster, values in [0,1]. Frames are stored at float32 in the
// episode container; learning code converts to double tensors.
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.f) {}

  float& at(int ch, int i, int j) {
    return data[(static_cast<std::size_t>(ch) * h + i) * w + j];
  }
  float at(int ch, int i, int j) const {
    return data[(static_cast<std::size_t>(ch) * h + i) * w + j];
  }
  std::size_t size() const { return data.size(); }
};

nn::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const nn::Tensor& t);  // [3,H,W], clamped to [0,1]

// Binary PPM (P6), 8-bit; input clamped to [0,1].
void write_ppm(const std::string& path, const Image& img);

}  // namespace ovp
