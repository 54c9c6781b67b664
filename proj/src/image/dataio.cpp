#include "degsr/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

namespace degsr {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image load_image(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  static constexpr std::array<unsigned char, 8> kSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  const std::size_t probe = std::min(bytes.size(), kSignature.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(probe), kSignature.begin())) {
    throw ImageFormatError(path.string() + ": not a PNG file");
  }
  if (bytes.size() < kSignature.size()) throw ImageDecodeError(path.string() + ": truncated PNG signature");

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ImageDecodeError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageDecodeError(path.string() + ": " + msg);
  }
  const int w = static_cast<int>(png.width);
  const int h = static_cast<int>(png.height);
  png_image_free(&png);

  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = from_u8(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return img;
}

void save_image(const fs::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) {
    throw std::invalid_argument("save_image: unsupported channel count " + std::to_string(img.channels));
  }
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("save_image: empty image");
  std::vector<unsigned char> packed(img.data.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        packed[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = to_u8(img.at(c, y, x));

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, packed.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("cannot write " + path.string() + ": " + msg);
  }
}

CropWindow random_crop_window(const Image& img, int w, int h, std::mt19937_64& rng) {
  if (w < 1 || h < 1 || img.width < w || img.height < h) {
    throw std::invalid_argument("random_crop: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " smaller than crop " + std::to_string(w) + "x" + std::to_string(h));
  }
  std::uniform_int_distribution<int> ux(0, img.width - w);
  std::uniform_int_distribution<int> uy(0, img.height - h);
  CropWindow win;
  win.x = ux(rng);
  win.y = uy(rng);
  return win;
}

Image random_crop(const Image& img, int w, int h, std::mt19937_64& rng) {
  const CropWindow win = random_crop_window(img, w, h, rng);
  return crop(img, win.x, win.y, w, h);
}

DatasetManifest DatasetManifest::from_directory(const fs::path& root, DatasetRole role) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw std::runtime_error("dataset directory not found: " + root.string());
  DatasetManifest m;
  m.role = role;
  m.root = root;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") m.files.push_back(entry.path().filename().string());
  }
  if (ec) throw std::runtime_error("cannot list " + root.string() + ": " + ec.message());
  std::sort(m.files.begin(), m.files.end());
  return m;
}

DatasetManifest DatasetManifest::from_file(const fs::path& manifest, const fs::path& root, DatasetRole role) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  DatasetManifest m;
  m.role = role;
  m.root = root;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    line = line.substr(start);
    if (!seen.insert(line).second) throw std::runtime_error("manifest " + manifest.string() + " lists " + line + " twice");
    m.files.push_back(line);
  }
  std::sort(m.files.begin(), m.files.end());
  return m;
}

BatchIterator::BatchIterator(std::vector<Image> images, int batch_size, int patch, std::uint64_t seed)
    : batch_size_(batch_size), patch_(patch), rng_(seed) {
  if (batch_size < 1 || patch < 1) throw std::invalid_argument("batch size and patch must be positive");
  for (auto& img : images) {
    if (img.width >= patch && img.height >= patch) images_.push_back(std::move(img));
  }
  if (images_.empty()) throw std::runtime_error("no image is at least " + std::to_string(patch) + "x" + std::to_string(patch));
  if (images_.size() < static_cast<std::size_t>(batch_size)) {
    throw std::runtime_error("only " + std::to_string(images_.size()) + " usable images for batch size " +
                             std::to_string(batch_size));
  }
  start_epoch();
}

namespace {

std::vector<Image> load_all(const DatasetManifest& manifest, int patch) {
  if (manifest.size() == 0) throw std::runtime_error("dataset " + manifest.root.string() + " has no images");
  std::vector<Image> images;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Image img = load_image(manifest.path(i));
    if (img.width < patch || img.height < patch) {
      std::cerr << "warning: skipping " << manifest.path(i).string() << " (" << img.width << "x" << img.height
                << " is smaller than the " << patch << "x" << patch << " patch)\n";
    }
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace

BatchIterator::BatchIterator(const DatasetManifest& manifest, int batch_size, int patch, std::uint64_t seed)
    : BatchIterator(load_all(manifest, patch), batch_size, patch, seed) {}

void BatchIterator::start_epoch() {
  order_.resize(images_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
  ++epoch_;
}

Tensor BatchIterator::next() {
  if (cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) start_epoch();
  Tensor batch = Tensor::zeros({batch_size_, 3, patch_, patch_});
  for (int b = 0; b < batch_size_; ++b) {
    const Image patch = random_crop(images_[order_[cursor_++]], patch_, patch_, rng_);
    std::copy(patch.data.begin(), patch.data.end(), batch.ptr() + b * batch.shape().sample());
  }
  return batch;
}

}  // namespace degsr
