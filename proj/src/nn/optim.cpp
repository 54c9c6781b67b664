#include "degsr/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "degsr/simd/kernels.hpp"

namespace degsr {

double lr_at(const LrSchedule& schedule, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("lr_at: negative step " + std::to_string(t));
  if (schedule.halve_every <= 0) return schedule.base_lr;
  const std::int64_t halvings = t / schedule.halve_every;
  return std::ldexp(schedule.base_lr, -static_cast<int>(std::min<std::int64_t>(halvings, 4096)));
}

Adam::Adam(const ModelParams& params, const AdamConfig& config) : params_(&params), config_(config) {
  for (const auto& p : params.items()) {
    m_.push_back(Tensor::zeros(p.tensor.shape()));
    v_.push_back(Tensor::zeros(p.tensor.shape()));
  }
}

void Adam::step(float lr) {
  const auto& items = params_->items();
  for (const auto& p : items) {
    if (!p.tensor.has_grad()) throw std::invalid_argument("adam step: parameter " + p.name + " has no gradient");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  simd::AdamCoefficients coef;
  coef.lr = lr;
  coef.beta1 = config_.beta1;
  coef.beta2 = config_.beta2;
  coef.eps = config_.eps;
  coef.bias_correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta1), t));
  coef.bias_correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta2), t));
  const auto& kern = simd::kernels();
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor theta = items[i].tensor;
    const float decay = items[i].is_weight ? config_.weight_decay : 0.0f;
    coef.coupled_decay = config_.decoupled ? 0.0f : decay;
    coef.decoupled_decay = config_.decoupled ? decay : 0.0f;
    kern.adam_update(theta.numel(), theta.ptr(), theta.grad().data(), m_[i].ptr(), v_[i].ptr(), coef);
  }
}

void Adam::restore(std::int64_t steps, const std::vector<Tensor>& m, const std::vector<Tensor>& v) {
  const auto& items = params_->items();
  if (m.size() != items.size() || v.size() != items.size()) {
    throw std::invalid_argument("adam restore: expected " + std::to_string(items.size()) + " moment tensors");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (m[i].shape() != items[i].tensor.shape() || v[i].shape() != items[i].tensor.shape()) {
      throw ShapeError("adam restore: moment shape for " + items[i].name + " does not match " +
                       items[i].tensor.shape().str());
    }
  }
  steps_ = steps;
  for (std::size_t i = 0; i < items.size(); ++i) {
    m_[i] = m[i].clone();
    v_[i] = v[i].clone();
  }
}

}  // namespace degsr
