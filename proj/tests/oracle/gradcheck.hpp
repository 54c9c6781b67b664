#pragma once

#include <functional>
#include <vector>

#include "degsr/tensor.hpp"
#include "reference_ops.hpp"

namespace oracle {

using FloatFn = std::function<degsr::Tensor(const std::vector<degsr::Tensor>&)>;
using RefFn = std::function<double(const std::vector<Ref>&)>;

struct GradCheck {
  double forward_error = 0.0;   // |f32 value - f64 value| / max(|f64 value|, 1)
  double gradient_error = 0.0;  // worst relative error over all grad inputs
};

// Runs the float graph on a tape, backpropagates, and compares every
// requires_grad input's gradient with central differences of the 64-bit
// reference function.
inline GradCheck check_gradients(const std::vector<degsr::Tensor>& inputs, const FloatFn& f32, const RefFn& f64,
                                 double h = 1e-3) {
  degsr::Tape tape;
  degsr::Tensor loss;
  {
    degsr::TapeScope scope(tape);
    loss = f32(inputs);
  }
  degsr::backward(loss, tape);

  std::vector<Ref> refs;
  refs.reserve(inputs.size());
  for (const auto& t : inputs) refs.push_back(from_tensor(t));

  GradCheck out;
  const double ref_value = f64(refs);
  out.forward_error = std::fabs(loss.item() - ref_value) / std::max(std::fabs(ref_value), 1.0);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    auto probe = [&](const std::vector<double>& values) {
      std::vector<Ref> args = refs;
      args[k].v = values;
      return f64(args);
    };
    const std::vector<double> fd = finite_difference(probe, refs[k].v, h);
    out.gradient_error = std::max(out.gradient_error, relative_error(inputs[k].grad(), fd));
  }
  return out;
}

}  // namespace oracle
