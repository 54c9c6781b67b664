#pragma once

// Training losses and the composite objectives built from them. Batch losses
// average over the N images of the minibatch.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "degsr/models.hpp"

namespace degsr {

// Any differentiable image-to-image or image-to-feature map.
using Mapping = std::function<Tensor(const Tensor&)>;

struct LossWeights {
  float alpha = 1.0f;   // adversarial term of the degradation objective
  float beta = 0.5f;    // perceptual term of the degradation objective
  float eta = 1.0f;     // cycle term of the reconstruction objective
  float gamma = 0.01f;  // total-variation term of the reconstruction objective
  bool squared_norms = false;  // use squared Euclidean norms in perceptual and TV terms
};

// Lower clamp for log arguments; the upper clamp is 1 so a perfect score
// costs exactly zero.
inline constexpr float kLogEpsilon = 1e-7f;

// mean_i -log p_i over discriminator probabilities of generated images.
Tensor adversarial_loss(const Tensor& fake_probability);
Tensor adversarial_loss(const Discriminator& d, const Tensor& generated_lr);

// mean_i [-log D(z_i) - log(1 - D(y_i))]
Tensor discriminator_loss(const Tensor& real_probability, const Tensor& fake_probability);
Tensor discriminator_loss(const Discriminator& d, const Tensor& real_lr, const Tensor& generated_lr);

// mean_i ||F(resize(a_i)) - F(resize(b_i))||_2 with both inputs bilinearly
// resized to size x size. The second input is treated as a constant target.
Tensor perceptual_loss(const Mapping& features, int size, const Tensor& generated, const Tensor& target,
                       bool squared = false);
Tensor perceptual_loss(const FeatureExtractor& p, const Tensor& generated, const Tensor& target, bool squared = false);

// mean_i (||horizontal differences||_2 + ||vertical differences||_2)
Tensor tv_loss(const Tensor& image, bool squared = false);

// Mean absolute error over every element, hence the batch mean of per-image
// mean absolute errors.
Tensor l1_loss(const Tensor& a, const Tensor& b);

// l1_loss(g(r(z)), z)
Tensor cycle_loss(const Mapping& g, const Mapping& r, const Tensor& z);
Tensor cycle_loss(const DegradationNet& g, const ReconstructionNet& r, const Tensor& z);

// Undefined tensors stand for absent terms and contribute nothing.
Tensor degradation_objective(const Tensor& l_cyc, const Tensor& l_adv, const Tensor& l_per, const LossWeights& w);
Tensor reconstruction_objective(const Tensor& l_1, const Tensor& l_cyc, const Tensor& l_tv, const LossWeights& w);
Tensor total_objective(const Tensor& l_deg, const Tensor& l_rec);

double degradation_objective(double l_cyc, double l_adv, double l_per, const LossWeights& w);
double reconstruction_objective(double l_1, double l_cyc, double l_tv, const LossWeights& w);
double total_objective(double l_deg, double l_rec);

// Loss values of one training iteration. Absent terms stay empty.
struct LossBreakdown {
  std::optional<double> adv;
  std::optional<double> per;
  std::optional<double> cyc;
  std::optional<double> l1;
  std::optional<double> tv;
  std::optional<double> disc;
  std::optional<double> deg;
  std::optional<double> rec;
  std::optional<double> total;

  // Fills deg (when any degradation term is present), rec and total from
  // the components.
  void compose(const LossWeights& w);
  // Present fields in canonical order as (name, value).
  std::vector<std::pair<std::string, double>> fields() const;
  // Recomputes the composites from the components and compares within
  // tolerance * max(1, |value|).
  bool composite_identity_holds(const LossWeights& w, double tolerance = 1e-6) const;
};

// Canonical field names in logging order.
const std::vector<std::string>& loss_field_names();

}  // namespace degsr
