#include "degsr/losses.hpp"

#include <cmath>

#include "degsr/ops.hpp"

namespace degsr {

namespace {

// -log(clamp(p, eps, 1)) per element
Tensor neg_log(const Tensor& p) { return affine(log(clamp(p, kLogEpsilon, 1.0f)), -1.0f, 0.0f); }

Tensor per_sample_norm(const Tensor& diff, bool squared) {
  Tensor sq = sum_per_sample(square(diff));
  return squared ? sq : sqrt(sq);
}

Tensor add_weighted(const Tensor& acc, const Tensor& term, float weight) {
  if (!term.defined() || weight == 0.0f) return acc;
  Tensor scaled = weight == 1.0f ? term : affine(term, weight, 0.0f);
  return acc.defined() ? add(acc, scaled) : scaled;
}

Tensor or_zero(const Tensor& t) { return t.defined() ? t : Tensor::scalar(0.0f); }

void require_batch(const char* op, const Tensor& t) {
  if (t.shape().n < 1) throw ShapeError(std::string(op) + ": empty batch " + t.shape().str());
}

}  // namespace

Tensor adversarial_loss(const Tensor& fake_probability) {
  require_batch("adversarial_loss", fake_probability);
  return mean(neg_log(fake_probability));
}

Tensor adversarial_loss(const Discriminator& d, const Tensor& generated_lr) {
  return adversarial_loss(d.forward(generated_lr));
}

Tensor discriminator_loss(const Tensor& real_probability, const Tensor& fake_probability) {
  require_batch("discriminator_loss", real_probability);
  if (real_probability.shape() != fake_probability.shape()) {
    throw ShapeError("discriminator_loss: real " + real_probability.shape().str() + " vs fake " +
                     fake_probability.shape().str());
  }
  Tensor real_term = neg_log(real_probability);
  Tensor fake_term = neg_log(affine(fake_probability, -1.0f, 1.0f));
  return mean(add(real_term, fake_term));
}

Tensor discriminator_loss(const Discriminator& d, const Tensor& real_lr, const Tensor& generated_lr) {
  return discriminator_loss(d.forward(real_lr), d.forward(generated_lr));
}

Tensor perceptual_loss(const Mapping& features, int size, const Tensor& generated, const Tensor& target,
                       bool squared) {
  if (generated.shape().n != target.shape().n) {
    throw ShapeError("perceptual_loss: batch mismatch " + generated.shape().str() + " vs " + target.shape().str());
  }
  auto fit = [size](const Tensor& t) {
    return t.shape().h == size && t.shape().w == size ? t : bilinear_resize(t, size, size);
  };
  Tensor target_features;
  {
    NoGradScope constant_target;
    target_features = features(fit(target));
  }
  Tensor generated_features = features(fit(generated));
  return mean(per_sample_norm(sub(generated_features, target_features), squared));
}

Tensor perceptual_loss(const FeatureExtractor& p, const Tensor& generated, const Tensor& target, bool squared) {
  return perceptual_loss([&p](const Tensor& x) { return p.forward(x); }, p.input_size(), generated, target, squared);
}

Tensor tv_loss(const Tensor& image, bool squared) {
  const Shape& s = image.shape();
  require_batch("tv_loss", image);
  if (s.h * s.w < 2) throw ShapeError("tv_loss needs at least two pixels, got " + s.str());
  Tensor per_image;
  if (s.w > 1) per_image = per_sample_norm(diff_h(image), squared);
  if (s.h > 1) {
    Tensor v = per_sample_norm(diff_v(image), squared);
    per_image = per_image.defined() ? add(per_image, v) : v;
  }
  return mean(per_image);
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("l1_loss: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  require_batch("l1_loss", a);
  return mean(abs(sub(a, b)));
}

Tensor cycle_loss(const Mapping& g, const Mapping& r, const Tensor& z) { return l1_loss(g(r(z)), z); }

Tensor cycle_loss(const DegradationNet& g, const ReconstructionNet& r, const Tensor& z) {
  return cycle_loss([&g](const Tensor& x) { return g.forward(x); }, [&r](const Tensor& x) { return r.forward(x); }, z);
}

Tensor degradation_objective(const Tensor& l_cyc, const Tensor& l_adv, const Tensor& l_per, const LossWeights& w) {
  Tensor acc = add_weighted(Tensor(), l_cyc, 1.0f);
  acc = add_weighted(acc, l_adv, w.alpha);
  acc = add_weighted(acc, l_per, w.beta);
  return or_zero(acc);
}

Tensor reconstruction_objective(const Tensor& l_1, const Tensor& l_cyc, const Tensor& l_tv, const LossWeights& w) {
  Tensor acc = add_weighted(Tensor(), l_1, 1.0f);
  acc = add_weighted(acc, l_cyc, w.eta);
  acc = add_weighted(acc, l_tv, w.gamma);
  return or_zero(acc);
}

Tensor total_objective(const Tensor& l_deg, const Tensor& l_rec) {
  return or_zero(add_weighted(add_weighted(Tensor(), l_deg, 1.0f), l_rec, 1.0f));
}

double degradation_objective(double l_cyc, double l_adv, double l_per, const LossWeights& w) {
  return l_cyc + static_cast<double>(w.alpha) * l_adv + static_cast<double>(w.beta) * l_per;
}

double reconstruction_objective(double l_1, double l_cyc, double l_tv, const LossWeights& w) {
  return l_1 + static_cast<double>(w.eta) * l_cyc + static_cast<double>(w.gamma) * l_tv;
}

double total_objective(double l_deg, double l_rec) { return l_deg + l_rec; }

const std::vector<std::string>& loss_field_names() {
  static const std::vector<std::string> names{"L_adv", "L_per", "L_cyc", "L_1",    "L_tv",
                                              "L_D",   "L_deg", "L_rec", "L_total"};
  return names;
}

void LossBreakdown::compose(const LossWeights& w) {
  if (adv || per || cyc) deg = degradation_objective(cyc.value_or(0.0), adv.value_or(0.0), per.value_or(0.0), w);
  rec = reconstruction_objective(l1.value_or(0.0), cyc.value_or(0.0), tv.value_or(0.0), w);
  total = total_objective(deg.value_or(0.0), *rec);
}

std::vector<std::pair<std::string, double>> LossBreakdown::fields() const {
  const std::optional<double>* values[] = {&adv, &per, &cyc, &l1, &tv, &disc, &deg, &rec, &total};
  std::vector<std::pair<std::string, double>> out;
  const auto& names = loss_field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (values[i]->has_value()) out.emplace_back(names[i], **values[i]);
  }
  return out;
}

bool LossBreakdown::composite_identity_holds(const LossWeights& w, double tolerance) const {
  auto close = [tolerance](double a, double b) { return std::fabs(a - b) <= tolerance * std::max(1.0, std::fabs(b)); };
  const double want_deg = degradation_objective(cyc.value_or(0.0), adv.value_or(0.0), per.value_or(0.0), w);
  const double want_rec = reconstruction_objective(l1.value_or(0.0), cyc.value_or(0.0), tv.value_or(0.0), w);
  if (deg && !close(*deg, want_deg)) return false;
  if (!deg && (adv || per || cyc)) return false;
  if (!rec || !close(*rec, want_rec)) return false;
  if (!total || !close(*total, total_objective(deg.value_or(0.0), *rec))) return false;
  return true;
}

}  // namespace degsr
