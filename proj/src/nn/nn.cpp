#include "degsr/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "degsr/ops.hpp"

namespace degsr {

Tensor ConvLayer::forward(const Tensor& x) const {
  Tensor y = conv2d(x, weight, bias, stride, padding);
  switch (activation) {
    case Activation::relu:
      return relu(y);
    case Activation::leaky_relu:
      return leaky_relu(y, leaky_slope);
    case Activation::none:
      break;
  }
  return y;
}

ConvLayer make_conv(int in_channels, int out_channels, int kernel, int stride, Activation activation, int padding) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv kernel size must be odd, got " + std::to_string(kernel));
  if (in_channels < 1 || out_channels < 1 || stride < 1) throw std::invalid_argument("conv channels and stride must be positive");
  ConvLayer layer;
  layer.weight = Tensor::zeros({out_channels, in_channels, kernel, kernel});
  layer.bias = Tensor::zeros({out_channels, 1, 1, 1});
  layer.stride = stride;
  layer.padding = padding < 0 ? kernel / 2 : padding;
  layer.activation = activation;
  return layer;
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  if (x.shape().c != width()) {
    throw ShapeError("residual block of width " + std::to_string(width()) + " applied to " + x.shape().str());
  }
  Tensor body = conv2.forward(conv1.forward(x));
  if (residual_scale != 1.0f) body = affine(body, residual_scale, 0.0f);
  return add(x, body);
}

ResidualBlock make_residual_block(int width, float residual_scale, int kernel) {
  ResidualBlock block;
  block.conv1 = make_conv(width, width, kernel, 1, Activation::relu);
  block.conv2 = make_conv(width, width, kernel, 1, Activation::none);
  block.residual_scale = residual_scale;
  return block;
}

void ModelParams::add(std::string name, Tensor tensor, bool is_weight, float init_gain) {
  for (const auto& p : items_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  items_.push_back({std::move(name), std::move(tensor), is_weight, init_gain});
}

void ModelParams::add_conv(const std::string& prefix, const ConvLayer& layer, float gain_scale) {
  float gain = 1.0f;
  if (layer.activation == Activation::relu) gain = std::sqrt(2.0f);
  if (layer.activation == Activation::leaky_relu) gain = std::sqrt(2.0f / (1.0f + layer.leaky_slope * layer.leaky_slope));
  add(prefix + ".weight", layer.weight, true, gain * gain_scale);
  add(prefix + ".bias", layer.bias, false);
}

std::size_t ModelParams::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : items_) total += p.tensor.numel();
  return total;
}

const NamedParam& ModelParams::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

void ModelParams::set_requires_grad(bool value) {
  for (auto& p : items_) p.tensor.set_requires_grad(value);
}

void ModelParams::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

void ModelParams::clear_grad() {
  for (auto& p : items_) p.tensor.clear_grad();
}

void init_params(ModelParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& p : params.items()) {
    Tensor t = p.tensor;
    if (!p.is_weight) {
      std::fill(t.data().begin(), t.data().end(), 0.0f);
      continue;
    }
    const double fan_in = static_cast<double>(t.shape().c) * t.shape().h * t.shape().w;
    std::normal_distribution<float> normal(0.0f, static_cast<float>(p.init_gain / std::sqrt(fan_in)));
    for (float& v : t.data()) v = normal(rng);
  }
}

}  // namespace degsr
