#include "degsr/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "degsr/ops.hpp"

namespace degsr {

namespace {

// Second conv of each residual branch starts scaled by 1/sqrt(blocks) so the
// trunk's variance grows by about e rather than 2^blocks at initialization.
float branch_gain(int blocks) { return 1.0f / std::sqrt(static_cast<float>(std::max(blocks, 1))); }

}  // namespace

void require_scale(int scale) {
  if (scale != 2 && scale != 4) throw std::invalid_argument("scale must be 2 or 4, got " + std::to_string(scale));
}

ReconstructionNetConfig ReconstructionNetConfig::for_scale(int scale, int blocks) {
  require_scale(scale);
  ReconstructionNetConfig c;
  c.scale = scale;
  c.blocks = blocks;
  c.width = scale == 2 ? 64 : 256;
  c.residual_scale = scale == 2 ? 1.0f : 0.1f;
  return c;
}

DegradationNet::DegradationNet(const DegradationNetConfig& config) : config_(config) {
  require_scale(config.scale);
  const int w = config.width;
  head_ = make_conv(3, w, 3, 1, Activation::relu);
  params_.add_conv("head", head_);
  for (int i = 0; i < config.blocks; ++i) {
    blocks_.push_back(make_residual_block(w, 1.0f));
    params_.add_conv("block" + std::to_string(i) + ".conv1", blocks_.back().conv1);
    params_.add_conv("block" + std::to_string(i) + ".conv2", blocks_.back().conv2, branch_gain(config.blocks));
  }
  down_ = make_conv(w, w, 3, config.scale, Activation::none);
  params_.add_conv("down", down_);
  tail_ = make_conv(w, 3, 3, 1, Activation::none);
  params_.add_conv("tail", tail_);
}

Tensor DegradationNet::forward(const Tensor& hr) const {
  const Shape& s = hr.shape();
  if (s.c != 3) throw ShapeError("degradation net expects 3 channels, got " + s.str());
  if (s.h % config_.scale != 0 || s.w % config_.scale != 0) {
    throw ShapeError("degradation net input " + s.str() + " must have height and width that are multiples of " +
                     std::to_string(config_.scale));
  }
  Tensor h = head_.forward(hr);
  if (config_.downsample_first) h = down_.forward(h);
  for (const auto& block : blocks_) h = block.forward(h);
  if (!config_.downsample_first) h = down_.forward(h);
  return tail_.forward(h);
}

ReconstructionNet::ReconstructionNet(const ReconstructionNetConfig& config) : config_(config) {
  require_scale(config.scale);
  const int w = config.width;
  head_ = make_conv(3, w, 3);
  params_.add_conv("head", head_);
  for (int i = 0; i < config.blocks; ++i) {
    blocks_.push_back(make_residual_block(w, config.residual_scale));
    params_.add_conv("block" + std::to_string(i) + ".conv1", blocks_.back().conv1);
    params_.add_conv("block" + std::to_string(i) + ".conv2", blocks_.back().conv2, branch_gain(config.blocks));
  }
  trunk_tail_ = make_conv(w, w, 3);
  params_.add_conv("trunk_tail", trunk_tail_);
  for (int s = config.scale; s > 1; s /= 2) {
    upsample_.push_back(make_conv(w, 4 * w, 3));
    params_.add_conv("upsample" + std::to_string(upsample_.size() - 1), upsample_.back());
  }
  tail_ = make_conv(w, 3, 3);
  params_.add_conv("tail", tail_);
}

Tensor ReconstructionNet::forward(const Tensor& lr) const {
  if (lr.shape().c != 3) throw ShapeError("reconstruction net expects 3 channels, got " + lr.shape().str());
  Tensor head = head_.forward(lr);
  Tensor h = head;
  for (const auto& block : blocks_) h = block.forward(h);
  h = add(head, trunk_tail_.forward(h));
  for (const auto& up : upsample_) h = pixel_shuffle(up.forward(h), 2);
  return tail_.forward(h);
}

int ReconstructionNet::receptive_radius() const {
  // 3x3 convs at input resolution: head, two per block, trunk tail, first upsample.
  const int lr_convs = 3 + 2 * config_.blocks;
  // Later convs run at 2x, 4x, ... and reach a fraction of an input pixel.
  double extra = 0.0;
  double factor = 2.0;
  for (std::size_t i = 1; i < upsample_.size(); ++i) {
    extra += 1.0 / factor;
    factor *= 2.0;
  }
  extra += 1.0 / factor;
  return lr_convs + static_cast<int>(std::ceil(extra));
}

Discriminator::Discriminator(const DiscriminatorConfig& config) : config_(config) {
  if (config.widths.empty()) throw std::invalid_argument("discriminator needs at least one conv layer");
  int in = 3;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    ConvLayer c = make_conv(in, config.widths[i], 3, 2, Activation::leaky_relu);
    c.leaky_slope = config.leaky_slope;
    convs_.push_back(c);
    params_.add_conv("conv" + std::to_string(i), c);
    in = config.widths[i];
  }
  classifier_ = make_conv(in, 1, 1, 1, Activation::none, 0);
  params_.add_conv("classifier", classifier_);
}

Tensor Discriminator::forward(const Tensor& lr) const {
  const Shape& s = lr.shape();
  if (s.c != 3 || s.h != config_.input_size || s.w != config_.input_size) {
    throw ShapeError("discriminator configured for 3x" + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + " inputs, got " + s.str());
  }
  Tensor h = lr;
  for (const auto& c : convs_) h = c.forward(h);
  return sigmoid(classifier_.forward(global_avg_pool(h)));
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  if (config.input_size < 8 || config.input_size % 8 != 0) {
    throw std::invalid_argument("feature extractor input size must be a positive multiple of 8, got " +
                                std::to_string(config.input_size));
  }
  // (stage widths, conv count) for VGG19 up to conv4_4
  const int widths[] = {64, 128, 256, 512};
  const int counts[] = {2, 2, 4, 4};
  int in = 3;
  for (int s = 0; s < 4; ++s) {
    stages_.emplace_back();
    for (int i = 0; i < counts[s]; ++i) {
      const bool last = s == 3 && i == counts[s] - 1;
      stages_.back().push_back(make_conv(in, widths[s], 3, 1, last ? Activation::none : Activation::relu));
      params_.add_conv("conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1), stages_.back().back());
      in = widths[s];
    }
  }
  init_params(params_, seed);
  params_.set_requires_grad(false);
}

Tensor FeatureExtractor::forward(const Tensor& img) const {
  const Shape& s = img.shape();
  if (s.c != 3 || s.h != config_.input_size || s.w != config_.input_size) {
    throw ShapeError("feature extractor expects Nx3x" + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + ", got " + s.str());
  }
  std::array<float, 3> scale{}, shift{};
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0f / kStd[c];
    shift[c] = -kMean[c] / kStd[c];
  }
  Tensor h = channel_affine(img, scale, shift);
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    if (st > 0) h = max_pool2x2(h);
    for (const auto& c : stages_[st]) h = c.forward(h);
  }
  return h;
}

}  // namespace degsr
