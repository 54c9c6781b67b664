#pragma once

// Alternating training of the degradation net G, its discriminator D and the
// reconstruction net R. Each iteration runs up to three steps:
//   1. D on real LR z versus G(x), then G on L_cyc + alpha L_adv + beta L_per
//   2. R on L_1(R(G(x)), x) + gamma L_tv with G frozen
//   3. R and G jointly on the cycle loss of R then G applied to z
// Ablation modes drop the pieces listed next to each enumerator.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "degsr/checkpoint.hpp"
#include "degsr/dataio.hpp"
#include "degsr/losses.hpp"
#include "degsr/models.hpp"
#include "degsr/optim.hpp"

namespace degsr {

enum class Ablation {
  full,
  no_dm,     // no G, D or cycle; R learns from bicubic-downscaled HR patches
  no_d,      // no D and no adversarial term
  no_cycle,  // no cycle term anywhere, step 3 skipped
};

Ablation parse_ablation(const std::string& text);
std::string to_string(Ablation a);

struct TrainConfig {
  int scale = 4;
  int batch_size = 16;
  int hr_patch = 240;
  LossWeights weights;
  LrSchedule schedule;
  AdamConfig adam;
  Ablation ablation = Ablation::full;
  std::uint64_t seed = 0;

  std::filesystem::path hr_dir;
  std::filesystem::path lr_dir;
  // Optional manifest files listing images relative to the directories.
  std::filesystem::path hr_manifest;
  std::filesystem::path lr_manifest;

  std::int64_t iterations = 1000000;
  std::int64_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
  std::filesystem::path out_dir;      // checkpoints and train.log; empty writes nothing

  DegradationNetConfig g;
  ReconstructionNetConfig r = ReconstructionNetConfig::for_scale(4);
  std::vector<int> d_widths{32, 64, 128, 256};
  int perceptual_size = 224;
  // Optional checkpoint-format file with "P."-prefixed extractor weights
  // (for example converted VGG19 weights). Empty keeps the seeded weights.
  std::filesystem::path perceptual_weights;
  int d_steps = 1;  // discriminator updates per iteration

  // Text stored verbatim in checkpoints for provenance.
  std::string config_echo;

  // Full-size settings for the given scale.
  static TrainConfig paper(int scale);
  // Small profile used for CPU runs and tests: patch 48, batch 4, R with
  // 4 blocks of width 64, 2000 iterations.
  static TrainConfig desk(int scale);

  int lr_patch() const { return hr_patch / scale; }
  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct TrainLogRow {
  std::int64_t iteration = 0;  // 1-based
  double lr = 0.0;
  LossBreakdown losses;
  double wall_ms = 0.0;
};

// iter<TAB>lr<TAB>name=value... for every present loss field
std::string format_log_row(const TrainLogRow& row);
// Inverse of format_log_row; wall_ms is not stored and reads back as 0.
TrainLogRow parse_log_row(const std::string& line);

class Trainer {
 public:
  // Builds and seeds the networks the ablation mode needs.
  explicit Trainer(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  std::int64_t iteration() const { return iteration_; }

  bool has_degradation() const { return g_ != nullptr; }
  bool has_discriminator() const { return d_ != nullptr; }
  DegradationNet& degradation();
  ReconstructionNet& reconstruction() { return *r_; }
  Discriminator& discriminator();
  const FeatureExtractor* feature_extractor() const { return p_.get(); }

  // The three steps. Each updates only the networks it owns and returns the
  // loss terms it computed. Batches must be non-empty; x is HR at hr_patch,
  // z is real LR at hr_patch / scale.
  LossBreakdown train_step_degradation(const Tensor& x, const Tensor& z, double lr);
  LossBreakdown train_step_reconstruction(const Tensor& x, double lr);
  LossBreakdown train_step_cycle(const Tensor& z, double lr);

  // One full iteration at lr_at(iteration); increments the counter.
  TrainLogRow step(const Tensor& x, const Tensor& z);

  // The LR images R trains on: G(x), or bicubic for no_dm. No gradients.
  Tensor degrade(const Tensor& x) const;
  // Mean absolute error of R(degrade(x)) against x. No gradients.
  double reconstruction_l1(const Tensor& x) const;

  Checkpoint checkpoint() const;
  // Restores weights, optimizer state and the iteration counter. The
  // checkpoint must describe the same architecture.
  void restore(const Checkpoint& ckpt);

 private:
  TrainConfig config_;
  std::int64_t iteration_ = 0;
  std::unique_ptr<DegradationNet> g_;
  std::unique_ptr<ReconstructionNet> r_;
  std::unique_ptr<Discriminator> d_;
  std::unique_ptr<FeatureExtractor> p_;
  std::unique_ptr<Adam> opt_g_;
  std::unique_ptr<Adam> opt_r_;
  std::unique_ptr<Adam> opt_d_;
};

using TrainObserver = std::function<void(const TrainLogRow&, Trainer&)>;

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<TrainLogRow> log;
};

// Loads both datasets, then runs config.iterations iterations. Writes
// out_dir/train.log, checkpoints every checkpoint_every iterations and
// out_dir/final.ckpt. Dataset errors abort before any training.
TrainResult train(const TrainConfig& config, const TrainObserver& observer = {});

// Networks rebuilt from a checkpoint for inference. expected_scale 0 accepts
// any scale; otherwise a different scale is rejected with CheckpointShapeError.
ReconstructionNet reconstruction_from_checkpoint(const Checkpoint& ckpt, int expected_scale = 0);
DegradationNet degradation_from_checkpoint(const Checkpoint& ckpt, int expected_scale = 0);
// The configuration text echoed into the checkpoint.
std::string checkpoint_config_echo(const Checkpoint& ckpt);
std::int64_t checkpoint_iteration(const Checkpoint& ckpt);

}  // namespace degsr
