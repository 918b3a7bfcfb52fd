#pragma once

#include <filesystem>
#include <vector>

#include "tkp/tensor.hpp"

namespace tkp {

/// Planar RGB image, 3 x H x W floats in [0,1].
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), data(3 * w * h, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  bool operator==(const Image&) const = default;
};

/// Rounds every channel to the nearest 8-bit level.
Image quantize_8bit(const Image& image);

/// 8-bit RGB PNG.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

template <typename T>
BasicTensor<T> image_to_tensor(const Image& image) {
  std::vector<T> v(image.data.begin(), image.data.end());
  return BasicTensor<T>({3, image.height, image.width}, std::move(v));
}

template <typename T>
Image tensor_to_image(const BasicTensor<T>& t) {
  Image img(t.dim(2), t.dim(1));
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(t.values()[i]);
  return img;
}

}  // namespace tkp
