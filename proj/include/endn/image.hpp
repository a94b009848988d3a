#pragma once

#include <string>
#include <vector>

#include "endn/tensor.hpp"

namespace endn {

// 8-bit image loaded to floats in [0, 1] (v / 255). Planar channel layout,
// data[c * h * w + y * w + x], matching the tensor layout.
struct ImageBuffer {
  int h = 0, w = 0, channels = 1;  // channels in {1, 3}
  std::vector<float> data;

  float& at(int c, int y, int x) { return data[(std::size_t(c) * h + y) * w + x]; }
  float at(int c, int y, int x) const { return data[(std::size_t(c) * h + y) * w + x]; }
};

// Reads PNG, PGM (P5) or PPM (P6), sniffed by content. 8-bit only; other bit
// depths raise FormatError, unreadable files raise IoError.
ImageBuffer load_image(const std::string& path);

// Clamps to [0, 1], quantizes round(v * 255), writes by extension:
// .png, .pgm (grayscale), .ppm (color).
void save_image(const ImageBuffer& img, const std::string& path);

Tensor4f image_to_tensor(const ImageBuffer& img);
ImageBuffer tensor_to_image(const Tensor4f& t);  // n must be 1; clamps to [0,1]

}  // namespace endn
