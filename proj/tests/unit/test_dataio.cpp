#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "degsr/dataio.hpp"

using namespace degsr;
namespace fs = std::filesystem;

namespace {

Image random_u8_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Image img(w, h, 3);
  for (float& v : img.data) v = from_u8(static_cast<std::uint8_t>(u(rng)));
  return img;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("degsr_test_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("8-bit conversion round-trips exactly") {
  for (int v = 0; v < 256; ++v) CHECK(to_u8(from_u8(static_cast<std::uint8_t>(v))) == v);
  Image q = quantize_u8(random_u8_image(5, 5, 1));
  CHECK(quantize_u8(q) == q);
}

TEST_CASE("png save and load are lossless") {
  const fs::path dir = temp_dir("roundtrip");
  Image img = random_u8_image(37, 23, 2);
  save_image(dir / "a.png", img);
  CHECK(load_image(dir / "a.png") == img);
  Image one = random_u8_image(1, 1, 3);
  save_image(dir / "one.png", one);
  CHECK(load_image(dir / "one.png") == one);
}

TEST_CASE("non-png and truncated files raise distinct errors") {
  const fs::path dir = temp_dir("errors");
  {
    std::ofstream(dir / "text.png") << "hello, this is not an image";
  }
  CHECK_THROWS_AS(load_image(dir / "text.png"), ImageFormatError);
  save_image(dir / "good.png", random_u8_image(32, 32, 4));
  std::ifstream in(dir / "good.png", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  {
    std::ofstream(dir / "cut.png", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_image(dir / "cut.png"), ImageDecodeError);
  CHECK_THROWS(load_image(dir / "missing.png"));
}

TEST_CASE("random crop windows") {
  Image img = random_u8_image(20, 15, 5);
  std::mt19937_64 rng(1);
  CHECK(random_crop(img, 20, 15, rng) == img);
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 10; ++i) {
    CropWindow wa = random_crop_window(img, 6, 4, a);
    CropWindow wb = random_crop_window(img, 6, 4, b);
    CHECK(wa.x == wb.x);
    CHECK(wa.y == wb.y);
  }
  CHECK_THROWS(random_crop(img, 21, 2, rng));
  Image c = random_crop(img, 7, 7, rng);
  std::set<float> source(img.data.begin(), img.data.end());
  for (float v : c.data) CHECK(source.count(v) == 1);
}

TEST_CASE("crop offsets are uniform") {
  Image img(100, 100, 1);
  std::mt19937_64 rng(11);
  std::vector<int> hx(91, 0), hy(91, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    CropWindow w = random_crop_window(img, 10, 10, rng);
    ++hx[w.x];
    ++hy[w.y];
  }
  // Chi-square with 90 degrees of freedom; 99.9th percentile is about 137.
  for (const auto& h : {hx, hy}) {
    const double expected = n / 91.0;
    double chi2 = 0;
    for (int count : h) chi2 += (count - expected) * (count - expected) / expected;
    CHECK(chi2 < 137.2);
  }
}

TEST_CASE("manifests are sorted, filtered and duplicate free") {
  const fs::path dir = temp_dir("manifest");
  for (const char* name : {"b.png", "a.png", "c.PNG"}) save_image(dir / name, random_u8_image(4, 4, 1));
  { std::ofstream(dir / "notes.txt") << "x"; }
  DatasetManifest m = DatasetManifest::from_directory(dir, DatasetRole::hr);
  CHECK(m.files == std::vector<std::string>{"a.png", "b.png", "c.PNG"});
  CHECK_THROWS(DatasetManifest::from_directory(dir / "missing", DatasetRole::hr));

  { std::ofstream(dir / "list.txt") << "# comment\nb.png\n\n  a.png\n"; }
  DatasetManifest f = DatasetManifest::from_file(dir / "list.txt", dir, DatasetRole::real_lr);
  CHECK(f.files == std::vector<std::string>{"a.png", "b.png"});
  CHECK(f.path(0) == dir / "a.png");
  { std::ofstream(dir / "dup.txt") << "a.png\na.png\n"; }
  CHECK_THROWS(DatasetManifest::from_file(dir / "dup.txt", dir, DatasetRole::hr));
}

TEST_CASE("batch iterator drops the last partial batch and is seeded") {
  std::vector<Image> images;
  for (int i = 0; i < 10; ++i) images.push_back(random_u8_image(30, 30, 100 + i));
  BatchIterator it(images, 4, 12, 5);
  CHECK(it.batches_per_epoch() == 2);
  Tensor b = it.next();
  CHECK(b.shape() == Shape{4, 3, 12, 12});
  it.next();
  CHECK(it.epoch() == 0);
  it.next();
  CHECK(it.epoch() == 1);

  BatchIterator x(images, 4, 12, 9), y(images, 4, 12, 9);
  for (int i = 0; i < 7; ++i) {
    Tensor bx = x.next(), by = y.next();
    CHECK(std::equal(bx.data().begin(), bx.data().end(), by.data().begin()));
  }
}

TEST_CASE("batch iterator excludes images smaller than the patch") {
  std::vector<Image> images{random_u8_image(8, 8, 1), random_u8_image(20, 20, 2), random_u8_image(20, 20, 3)};
  BatchIterator it(images, 2, 12, 1);
  CHECK(it.usable_images() == 2);
  CHECK_THROWS(BatchIterator(std::vector<Image>{random_u8_image(8, 8, 1)}, 1, 12, 1));
}

TEST_CASE("real-LR patches at a quarter of a 48 pixel HR patch are 12x12") {
  std::vector<Image> images{random_u8_image(40, 40, 1)};
  BatchIterator lr(images, 1, 48 / 4, 3);
  CHECK(lr.next().shape() == Shape{1, 3, 12, 12});
}
