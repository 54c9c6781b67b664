#pragma once

// PNG input/output, seeded patch sampling and minibatch iteration over
// unpaired image corpora.

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "degsr/image.hpp"

namespace degsr {

// The file is not a PNG.
class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The file starts like a PNG but cannot be decoded completely.
class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decodes any PNG to 8-bit RGB and converts to floats (v / 255).
Image load_image(const std::filesystem::path& path);
// Encodes as 8-bit RGB (or gray for one channel), rounding round(v * 255).
void save_image(const std::filesystem::path& path, const Image& img);

struct CropWindow {
  int x = 0;
  int y = 0;
};

// Uniformly placed w x h window. Pixel values are copied untouched.
CropWindow random_crop_window(const Image& img, int w, int h, std::mt19937_64& rng);
Image random_crop(const Image& img, int w, int h, std::mt19937_64& rng);

enum class DatasetRole { hr, real_lr, eval_pair };

struct DatasetManifest {
  DatasetRole role = DatasetRole::hr;
  std::filesystem::path root;
  std::vector<std::string> files;  // relative to root, sorted, unique

  // Every .png under root (non-recursive), sorted by name. Throws when root is
  // not a readable directory.
  static DatasetManifest from_directory(const std::filesystem::path& root, DatasetRole role);
  // One relative path per line; blank lines and lines starting with '#' are
  // ignored. Duplicates are rejected.
  static DatasetManifest from_file(const std::filesystem::path& manifest, const std::filesystem::path& root,
                                   DatasetRole role);

  std::filesystem::path path(std::size_t i) const { return root / files[i]; }
  std::size_t size() const { return files.size(); }
};

// Endless stream of (N, 3, patch, patch) batches. Each epoch visits the
// usable images in a seeded random order, crops one random patch per image
// and drops the final partial batch.
class BatchIterator {
 public:
  BatchIterator(std::vector<Image> images, int batch_size, int patch, std::uint64_t seed);
  BatchIterator(const DatasetManifest& manifest, int batch_size, int patch, std::uint64_t seed);

  Tensor next();
  std::size_t batches_per_epoch() const { return order_.size() / static_cast<std::size_t>(batch_size_); }
  std::size_t usable_images() const { return images_.size(); }
  std::int64_t epoch() const { return epoch_; }

 private:
  void start_epoch();

  std::vector<Image> images_;
  int batch_size_;
  int patch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = -1;
};

}  // namespace degsr
