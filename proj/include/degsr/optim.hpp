#pragma once

#include <cstdint>
#include <vector>

#include "degsr/nn.hpp"

namespace degsr {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;
  // false: decay * theta is added to the gradient before the moment updates.
  // true: theta is shrunk by lr * decay directly (AdamW style).
  bool decoupled = false;
  bool operator==(const AdamConfig&) const = default;
};

// Piecewise-constant schedule halving the rate every `halve_every` steps.
struct LrSchedule {
  double base_lr = 1e-4;
  std::int64_t halve_every = 200000;
  std::int64_t total_steps = 1000000;
  bool operator==(const LrSchedule&) const = default;
};

// base_lr * 2^-floor(t / halve_every)
double lr_at(const LrSchedule& schedule, std::int64_t t);

// Bias-corrected Adam over one ModelParams. Biases (non-weight parameters)
// are never decayed.
class Adam {
 public:
  Adam(const ModelParams& params, const AdamConfig& config);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

  // One update with learning rate `lr`. Throws std::invalid_argument naming
  // the first parameter without a gradient.
  void step(float lr);

  // Moment buffers, aligned with params.items().
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  // Replaces the state; shapes must match the parameters.
  void restore(std::int64_t steps, const std::vector<Tensor>& m, const std::vector<Tensor>& v);

 private:
  const ModelParams* params_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace degsr
