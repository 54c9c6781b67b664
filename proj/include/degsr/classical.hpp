#pragma once

// Non-learned degradation operators, resamplers, noise injection and the
// PSNR/SSIM evaluation protocol.

#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "degsr/image.hpp"

namespace degsr {

enum class Downsampler { bicubic, nearest, stride_pick };
enum class Direction { up, down };

Downsampler parse_downsampler(const std::string& name);

// Separable cubic convolution (a = -0.5) with symmetric border extension.
// When shrinking, the kernel is widened by the inverse scale so the result is
// antialiased. Output is clamped to [0, 1].
Image bicubic_resize(const Image& img, int out_w, int out_h);
// Integer factor convenience: down divides each side by `factor` (sides must
// be multiples), up multiplies.
Image bicubic_resize(const Image& img, int factor, Direction direction);

// Nearest rule: source index floor(i * in / out).
Image nearest_resize(const Image& img, int out_w, int out_h);
Image nearest_resize(const Image& img, int factor, Direction direction);

struct BlurKernel {
  int size = 1;
  std::vector<float> weights;  // size x size, row-major

  static BlurKernel identity();
  static BlurKernel gaussian(int size, double sigma);
  static BlurKernel uniform(int size);
  double sum() const;
};

struct SyntheticDegradationConfig {
  BlurKernel kernel = BlurKernel::gaussian(7, 1.6);
  int scale = 4;
  Downsampler downsampler = Downsampler::bicubic;
  double noise_percent = 0.0;
};

// 2-D correlation with symmetric border extension; output has the input size.
Image blur(const Image& img, const BlurKernel& kernel);

// blur, downsample by cfg.scale, add Gaussian noise, clamp to [0, 1]
Image synth_degrade(const Image& img, const SyntheticDegradationConfig& cfg, std::mt19937_64& rng);

// Adds N(0, (sigma_percent / 100)^2) per sample and clamps to [0, 1]. The
// noise field for a given generator state is the same for every sigma.
Image add_gaussian_noise(const Image& img, double sigma_percent, std::mt19937_64& rng);

// Luma plane 16 + 65.481 R + 128.553 G + 24.966 B on a 0..255 scale.
std::vector<double> luminance(const Image& img);

// Plane with shape (w, h) and double samples.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;
};

Plane luminance_plane(const Image& img, int shave = 0);
Plane channel_plane(const Image& img, int channel, double scale = 1.0, int shave = 0);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(max_val^2 / MSE); identical inputs give +infinity.
double psnr(const Plane& a, const Plane& b, double max_val);
double psnr(const Image& a, const Image& b, double max_val = 1.0);

// Mean SSIM over the valid positions of an 11x11 Gaussian window (sigma 1.5)
// with K1 = 0.01, K2 = 0.03 and dynamic range `range`.
double ssim(const Plane& a, const Plane& b, double range);

struct EvalProtocol {
  int shave = 0;        // border pixels removed on every side, usually the scale
  bool luminance = true;
};

struct MetricRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;
  // CSV with header name,psnr_db,ssim and a final MEAN row; infinity is
  // written as "inf".
  std::string to_csv() const;
};

std::string format_metric(double v);

// Scores one pair under the protocol. The reference is cropped to the
// candidate's size when it is larger by less than a scale step.
MetricRow evaluate_pair(const std::string& name, const Image& reference, const Image& candidate,
                        const EvalProtocol& protocol);

// Scores every PNG present under the same file name in both directories, in
// lexicographic order. Unmatched files are reported on stderr and skipped;
// throws when no names match.
MetricReport evaluate(const std::filesystem::path& reference_dir, const std::filesystem::path& candidate_dir,
                      const EvalProtocol& protocol);

}  // namespace degsr
