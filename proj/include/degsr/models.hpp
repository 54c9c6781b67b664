#pragma once

// The four networks of the framework: degradation net G (HR -> LR),
// reconstruction net R (LR -> HR), discriminator D on LR images and the
// frozen feature extractor P used by the perceptual loss.

#include <array>
#include <cstdint>
#include <vector>

#include "degsr/nn.hpp"

namespace degsr {

struct DegradationNetConfig {
  int scale = 4;
  int width = 32;
  int blocks = 8;
  // Run the strided conv right after the head so the blocks work at LR size.
  bool downsample_first = false;
  bool operator==(const DegradationNetConfig&) const = default;
};

struct ReconstructionNetConfig {
  int scale = 4;
  int width = 256;
  int blocks = 16;
  float residual_scale = 0.1f;
  bool operator==(const ReconstructionNetConfig&) const = default;

  // Width 64 with unit residual scale at x2, width 256 with scale 0.1 at x4.
  static ReconstructionNetConfig for_scale(int scale, int blocks = 16);
};

struct DiscriminatorConfig {
  int input_size = 60;  // spatial extent of the LR images it judges
  std::vector<int> widths{32, 64, 128, 256};
  float leaky_slope = 0.2f;
  bool operator==(const DiscriminatorConfig&) const = default;
};

struct FeatureExtractorConfig {
  int input_size = 224;
  bool operator==(const FeatureExtractorConfig&) const = default;
};

void require_scale(int scale);

// head conv + relu, residual blocks, strided conv, tail conv to RGB (or
// head, strided conv, blocks, tail with downsample_first)
class DegradationNet {
 public:
  explicit DegradationNet(const DegradationNetConfig& config);

  const DegradationNetConfig& config() const { return config_; }
  int scale() const { return config_.scale; }
  // (N, 3, H, W) -> (N, 3, H / scale, W / scale); H and W must be multiples of scale.
  Tensor forward(const Tensor& hr) const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  DegradationNetConfig config_;
  ConvLayer head_;
  std::vector<ResidualBlock> blocks_;
  ConvLayer down_;
  ConvLayer tail_;
  ModelParams params_;
};

// head conv, residual trunk with a global skip, x2 sub-pixel stages, tail conv
class ReconstructionNet {
 public:
  explicit ReconstructionNet(const ReconstructionNetConfig& config);

  const ReconstructionNetConfig& config() const { return config_; }
  int scale() const { return config_.scale; }
  // (N, 3, H, W) -> (N, 3, H * scale, W * scale)
  Tensor forward(const Tensor& lr) const;
  // Pixels of context each output pixel depends on, measured on the input.
  int receptive_radius() const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  ReconstructionNetConfig config_;
  ConvLayer head_;
  std::vector<ResidualBlock> blocks_;
  ConvLayer trunk_tail_;
  std::vector<ConvLayer> upsample_;
  ConvLayer tail_;
  ModelParams params_;
};

// strided leaky convs, global average pool, affine, sigmoid
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& config);

  const DiscriminatorConfig& config() const { return config_; }
  // (N, 3, S, S) -> (N, 1, 1, 1) probabilities in (0, 1); S must equal input_size.
  Tensor forward(const Tensor& lr) const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  DiscriminatorConfig config_;
  std::vector<ConvLayer> convs_;
  ConvLayer classifier_;
  ModelParams params_;
};

// VGG19 stack through conv4_4 (taken before its activation) behind ImageNet
// channel normalization. Parameters never require gradients.
class FeatureExtractor {
 public:
  FeatureExtractor(const FeatureExtractorConfig& config, std::uint64_t seed);

  const FeatureExtractorConfig& config() const { return config_; }
  int input_size() const { return config_.input_size; }
  std::uint64_t seed() const { return seed_; }
  // (N, 3, S, S) -> (N, 512, S / 8, S / 8)
  Tensor forward(const Tensor& img) const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  static constexpr std::array<float, 3> kMean{0.485f, 0.456f, 0.406f};
  static constexpr std::array<float, 3> kStd{0.229f, 0.224f, 0.225f};

 private:
  FeatureExtractorConfig config_;
  std::uint64_t seed_;
  // Convolution layers grouped into stages separated by 2x2 max pooling.
  std::vector<std::vector<ConvLayer>> stages_;
  ModelParams params_;
};

}  // namespace degsr
