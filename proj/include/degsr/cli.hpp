#pragma once

// Command-line layer: the key=value run configuration, the image-level
// operations behind each subcommand, and the subcommand entry points.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "degsr/classical.hpp"
#include "degsr/models.hpp"
#include "degsr/trainer.hpp"

namespace degsr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Settings that are not part of training.
struct CommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path in;
  std::filesystem::path out;
  std::filesystem::path ref;
  std::string mode = "learned";
  std::vector<double> sigmas{1, 2, 3, 4, 5, 6, 7};
  int tile = 48;
  int overlap = 8;
};

// A set of key=value assignments over a fixed key table. Unassigned keys
// take the defaults of the selected profile ("paper" or "desk") at the
// selected scale. Files are UTF-8 text with one assignment per line; blank
// lines and lines starting with '#' are ignored.
class RunConfig {
 public:
  struct Key {
    std::string name;
    std::string help;
  };
  static const std::vector<Key>& keys();
  static bool is_key(std::string_view name);

  static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  // Throws ConfigError for unknown keys and malformed values. A later
  // assignment replaces an earlier one.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return assigned_.count(key) != 0; }

  // Effective value of every key, one "key=value" line each in key-table
  // order. parse(echo()) reproduces the same echo.
  std::string echo() const;

  // Training settings with config_echo filled in from echo().
  TrainConfig train_config() const;
  CommandOptions options() const;
  int scale() const;

 private:
  std::map<std::string, std::string> assigned_;
};

enum class DegradeMode { learned, bicubic, nearest };
DegradeMode parse_degrade_mode(const std::string& text);

// LR image for one HR input whose sides are multiples of scale. Learned mode
// needs g; its output is quantized to 8 bits like the classical modes.
Image degrade_image(const Image& hr, DegradeMode mode, int scale, const DegradationNet* g);

Image super_resolve(const ReconstructionNet& r, const Image& lr);

struct TileOptions {
  int tile = 48;     // LR pixels per tile side
  int overlap = 8;   // LR pixels shared by neighbouring tiles
};

// Runs R on overlapping tiles. Each tile is read with a halo of
// receptive_radius() LR pixels so its interior matches the untiled result;
// overlaps are blended with linear ramps.
Image super_resolve_tiled(const ReconstructionNet& r, const Image& lr, const TileOptions& tiles);

struct NamedImage {
  std::string name;
  Image image;
};

// Every PNG in the directory, sorted by file name.
std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir);

// HR cropped to a multiple of scale, bicubic down, 8-bit quantized, bicubic
// up, quantized again, scored on luminance with a scale-pixel shave.
MetricReport bicubic_baseline(const std::vector<NamedImage>& hr, int scale);

struct SweepRow {
  double sigma = 0.0;  // percent of the intensity range
  double bicubic_psnr = 0.0;
  double bicubic_ssim = 0.0;
  std::optional<double> learned_psnr;
  std::optional<double> learned_ssim;
};

struct NoiseSweep {
  std::vector<SweepRow> rows;
  // sigma,bicubic_psnr_db,bicubic_ssim,learned_psnr_db,learned_ssim; the
  // learned fields are empty when no network was given.
  std::string to_csv() const;
};

// For each sigma: crop to a multiple of scale, bicubic down, quantize, add
// noise, quantize, then upscale by bicubic (and by r when given) and score as
// bicubic_baseline does. Image i draws its noise field from a generator
// seeded with (seed, i), so every sigma scales the same field.
NoiseSweep sweep_noise(const std::vector<NamedImage>& hr, const std::vector<double>& sigmas, int scale,
                       const ReconstructionNet* r, std::uint64_t seed);

// Subcommands. Each returns a process exit code and reports problems on err.
int cmd_train(const RunConfig& config, std::ostream& err);
int cmd_degrade(const RunConfig& config, std::ostream& err);
int cmd_sr(const RunConfig& config, std::ostream& err);
int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_sweep_noise(const RunConfig& config, std::ostream& out, std::ostream& err);

// Full command line: degsr <train|degrade|sr|eval|sweep-noise> [--config F]
// [--key value ...] [--set key=value ...].
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace degsr
