#pragma once

// Layer building blocks shared by the networks: convolution layers, scaled
// residual blocks and named parameter collections.

#include <cstdint>
#include <string>
#include <vector>

#include "degsr/tensor.hpp"

namespace degsr {

enum class Activation { none, relu, leaky_relu };

struct ConvLayer {
  Tensor weight;  // (out, in, k, k)
  Tensor bias;    // (out, 1, 1, 1)
  int stride = 1;
  int padding = 1;
  Activation activation = Activation::none;
  float leaky_slope = 0.2f;

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
  int kernel() const { return weight.shape().h; }

  Tensor forward(const Tensor& x) const;
};

// Zero-valued layer with an odd square kernel; padding defaults to k/2.
ConvLayer make_conv(int in_channels, int out_channels, int kernel, int stride = 1,
                    Activation activation = Activation::none, int padding = -1);

// output = x + residual_scale * conv2(relu(conv1(x)))
struct ResidualBlock {
  ConvLayer conv1;
  ConvLayer conv2;
  float residual_scale = 1.0f;

  int width() const { return conv1.in_channels(); }
  Tensor forward(const Tensor& x) const;
};

ResidualBlock make_residual_block(int width, float residual_scale, int kernel = 3);

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool is_weight = true;  // weights are decayed and He-initialized; biases are not
  // He gain of the nonlinearity that follows: sqrt(2) for relu,
  // sqrt(2 / (1 + slope^2)) for leaky relu, 1 for linear outputs.
  float init_gain = 1.41421356f;
};

// Ordered, named parameter set of one network. Tensors are shared with the
// layers that use them, so updating a tensor here updates the network.
class ModelParams {
 public:
  void add(std::string name, Tensor tensor, bool is_weight, float init_gain = 1.41421356f);
  // The He gain follows the layer's activation, times gain_scale.
  void add_conv(const std::string& prefix, const ConvLayer& layer, float gain_scale = 1.0f);

  const std::vector<NamedParam>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  // Throws std::out_of_range when absent.
  const NamedParam& find(const std::string& name) const;

  void set_requires_grad(bool value);
  void zero_grad();
  void clear_grad();

 private:
  std::vector<NamedParam> items_;
};

// He fan-in normal weights (std init_gain / sqrt(in * k * k)) and zero
// biases, drawn in parameter order from one generator seeded by `seed`.
void init_params(ModelParams& params, std::uint64_t seed);

}  // namespace degsr
