#include "degsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace degsr {

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Image quantize_u8(const Image& img) {
  Image out = img;
  for (float& v : out.data) v = from_u8(to_u8(v));
  return out;
}

Image crop(const Image& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > img.width || y + h > img.height) {
    throw std::invalid_argument("crop window " + std::to_string(w) + "x" + std::to_string(h) + "+" +
                                std::to_string(x) + "+" + std::to_string(y) + " outside image " +
                                std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  Image out(w, h, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int yy = 0; yy < h; ++yy)
      std::copy_n(&img.data[c * img.plane() + static_cast<std::size_t>(y + yy) * img.width + x], w, &out.at(c, yy, 0));
  return out;
}

Image crop_to_multiple(const Image& img, int multiple) {
  return crop(img, 0, 0, img.width - img.width % multiple, img.height - img.height % multiple);
}

Tensor to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const Image& first = images.front();
  Tensor t = Tensor::zeros({static_cast<int>(images.size()), first.channels, first.height, first.width});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_size(first)) throw ShapeError("to_tensor: images differ in size");
    std::copy(images[i].data.begin(), images[i].data.end(), t.ptr() + i * t.shape().sample());
  }
  return t;
}

Tensor to_tensor(const Image& image) { return to_tensor(std::vector<Image>{image}); }

Image to_image(const Tensor& t, int n) {
  const Shape& s = t.shape();
  if (n < 0 || n >= s.n) throw ShapeError("to_image: sample " + std::to_string(n) + " of " + s.str());
  Image img(s.w, s.h, s.c);
  const float* src = t.ptr() + n * s.sample();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = std::clamp(src[i], 0.0f, 1.0f);
  return img;
}

}  // namespace degsr
