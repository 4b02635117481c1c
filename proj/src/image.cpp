#include "ovp/image.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace ovp {

nn::Tensor image_to_tensor(const Image& img) {
  nn::Tensor t({img.c, img.h, img.w});
  for (std::size_t i = 0; i < img.data.size(); ++i)
    t.data[i] = static_cast<double>(img.data[i]);
  return t;
}

Image tensor_to_image(const nn::Tensor& t) {
  check_data(t.ndim() == 3, "tensor_to_image: expects [C,H,W]");
  Image img(t.dim(0), t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(std::clamp(t.data[i], 0.0, 1.0));
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  check_data(img.c == 3, "write_ppm: expects 3 channels");
  std::ofstream f(path, std::ios::binary);
  check_data(f.good(), "write_ppm: cannot open " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * 3);
  // Rows are written bottom-up so +y (row index) displays upward.
  for (int ii = 0; ii < img.h; ++ii) {
    int i = img.h - 1 - ii;
    for (int j = 0; j < img.w; ++j)
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::clamp(img.at(ch, i, j), 0.f, 1.f);
        row[static_cast<std::size_t>(j) * 3 + ch] =
            static_cast<unsigned char>(v * 255.f + 0.5f);
      }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  check_data(f.good(), "write_ppm: write failed for " + path);
}

}  // namespace ovp
