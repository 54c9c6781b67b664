#pragma once

// Planar RGB image with float samples in [0, 1].

#include <cstdint>
#include <vector>

#include "degsr/tensor.hpp"

namespace degsr {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;  // channel-major planes, row-major within a plane

  Image() = default;
  Image(int w, int h, int c = 3, float value = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, value) {}

  std::size_t plane() const { return static_cast<std::size_t>(width) * height; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return data.empty(); }
  bool same_size(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
  bool operator==(const Image&) const = default;
};

// Rounds every sample to the nearest multiple of 1/255 after clamping to [0, 1].
Image quantize_u8(const Image& img);
std::uint8_t to_u8(float v);
inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

// Top-left crop to (w, h).
Image crop(const Image& img, int x, int y, int w, int h);
// Crops the bottom/right so both sides are multiples of `multiple`.
Image crop_to_multiple(const Image& img, int multiple);

// Stacks equally sized images into an (N, C, H, W) tensor.
Tensor to_tensor(const std::vector<Image>& images);
Tensor to_tensor(const Image& image);
// Extracts sample n of a tensor as an image; values are clamped to [0, 1].
Image to_image(const Tensor& t, int n = 0);

}  // namespace degsr
