#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "degsr/cli.hpp"
#include "degsr/dataio.hpp"

namespace degsr {

DegradeMode parse_degrade_mode(const std::string& text) {
  if (text == "learned") return DegradeMode::learned;
  if (text == "bicubic") return DegradeMode::bicubic;
  if (text == "nearest") return DegradeMode::nearest;
  throw std::invalid_argument("unknown degradation mode '" + text + "' (expected learned, bicubic or nearest)");
}

Image degrade_image(const Image& hr, DegradeMode mode, int scale, const DegradationNet* g) {
  switch (mode) {
    case DegradeMode::bicubic:
      return quantize_u8(bicubic_resize(hr, scale, Direction::down));
    case DegradeMode::nearest:
      return nearest_resize(hr, scale, Direction::down);
    case DegradeMode::learned: {
      if (g == nullptr) throw std::invalid_argument("learned degradation needs a degradation net");
      if (g->scale() != scale) {
        throw std::invalid_argument("degradation net scale " + std::to_string(g->scale()) + " differs from requested " +
                                    std::to_string(scale));
      }
      NoGradScope no_grad;
      return quantize_u8(to_image(g->forward(to_tensor(hr))));
    }
  }
  throw std::logic_error("unhandled degradation mode");
}

Image super_resolve(const ReconstructionNet& r, const Image& lr) {
  NoGradScope no_grad;
  return to_image(r.forward(to_tensor(lr)));
}

namespace {

std::vector<int> tile_starts(int size, int tile, int overlap) {
  if (size <= tile) return {0};
  const int stride = std::max(1, tile - overlap);
  std::vector<int> starts;
  for (int a = 0;; a += stride) {
    if (a + tile >= size) {
      starts.push_back(size - tile);
      break;
    }
    starts.push_back(a);
  }
  return starts;
}

// Weight of output position x inside the tile [a, a + len) of an axis of
// length total. Ramps rise over `ramp` samples on sides that touch another
// tile and stay strictly positive.
double ramp_weight(int x, int a, int len, int total, int ramp) {
  if (ramp <= 0) return 1.0;
  double w = 1.0;
  if (a > 0) w = std::min(w, (x - a + 0.5) / ramp);
  if (a + len < total) w = std::min(w, (a + len - x - 0.5) / ramp);
  return w;
}

}  // namespace

Image super_resolve_tiled(const ReconstructionNet& r, const Image& lr, const TileOptions& tiles) {
  if (tiles.tile < 1 || tiles.overlap < 0) throw std::invalid_argument("tile must be positive and overlap non-negative");
  const int s = r.scale();
  const int halo = r.receptive_radius();
  const int overlap = std::min(tiles.overlap, tiles.tile - 1);
  const int out_w = lr.width * s;
  const int out_h = lr.height * s;
  const std::size_t out_plane = static_cast<std::size_t>(out_w) * out_h;
  std::vector<double> acc(out_plane * 3, 0.0);
  std::vector<double> weight(out_plane, 0.0);

  const auto xs = tile_starts(lr.width, tiles.tile, overlap);
  const auto ys = tile_starts(lr.height, tiles.tile, overlap);
  NoGradScope no_grad;
  for (int ty : ys) {
    const int th = std::min(tiles.tile, lr.height);
    for (int tx : xs) {
      const int tw = std::min(tiles.tile, lr.width);
      const int x0 = std::max(0, tx - halo);
      const int y0 = std::max(0, ty - halo);
      const int x1 = std::min(lr.width, tx + tw + halo);
      const int y1 = std::min(lr.height, ty + th + halo);
      const Tensor out = r.forward(to_tensor(crop(lr, x0, y0, x1 - x0, y1 - y0)));
      const int ow = out.shape().w;
      const int oh = out.shape().h;
      const auto data = out.data();
      for (int y = ty * s; y < (ty + th) * s; ++y) {
        const double wy = ramp_weight(y, ty * s, th * s, out_h, overlap * s);
        for (int x = tx * s; x < (tx + tw) * s; ++x) {
          const double w = wy * ramp_weight(x, tx * s, tw * s, out_w, overlap * s);
          const std::size_t dst = static_cast<std::size_t>(y) * out_w + x;
          const std::size_t src = static_cast<std::size_t>(y - y0 * s) * ow + (x - x0 * s);
          weight[dst] += w;
          for (int c = 0; c < 3; ++c) acc[c * out_plane + dst] += w * data[c * static_cast<std::size_t>(oh) * ow + src];
        }
      }
    }
  }
  Image img(out_w, out_h, 3);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < out_plane; ++i) {
      img.data[c * out_plane + i] = static_cast<float>(std::clamp(acc[c * out_plane + i] / weight[i], 0.0, 1.0));
    }
  }
  return img;
}

std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir) {
  const auto manifest = DatasetManifest::from_directory(dir, DatasetRole::eval_pair);
  std::vector<NamedImage> out;
  for (std::size_t i = 0; i < manifest.size(); ++i) out.push_back({manifest.files[i], load_image(manifest.path(i))});
  return out;
}

namespace {

EvalProtocol protocol_for(int scale) {
  EvalProtocol p;
  p.shave = scale;
  p.luminance = true;
  return p;
}

Image bicubic_lr(const Image& hr, int scale) { return quantize_u8(bicubic_resize(hr, scale, Direction::down)); }

Image bicubic_sr(const Image& lr, int scale) { return quantize_u8(bicubic_resize(lr, scale, Direction::up)); }

}  // namespace

MetricReport bicubic_baseline(const std::vector<NamedImage>& hr, int scale) {
  MetricReport report;
  for (const auto& item : hr) {
    const Image gt = crop_to_multiple(item.image, scale);
    report.rows.push_back(evaluate_pair(item.name, gt, bicubic_sr(bicubic_lr(gt, scale), scale), protocol_for(scale)));
  }
  return report;
}

std::string NoiseSweep::to_csv() const {
  std::string out = "sigma,bicubic_psnr_db,bicubic_ssim,learned_psnr_db,learned_ssim\n";
  for (const auto& r : rows) {
    out += format_metric(r.sigma) + "," + format_metric(r.bicubic_psnr) + "," + format_metric(r.bicubic_ssim) + ",";
    out += (r.learned_psnr ? format_metric(*r.learned_psnr) : "") + ",";
    out += (r.learned_ssim ? format_metric(*r.learned_ssim) : "") + "\n";
  }
  return out;
}

NoiseSweep sweep_noise(const std::vector<NamedImage>& hr, const std::vector<double>& sigmas, int scale,
                       const ReconstructionNet* r, std::uint64_t seed) {
  if (hr.empty()) throw std::invalid_argument("noise sweep needs at least one image");
  if (r != nullptr && r->scale() != scale) {
    throw std::invalid_argument("reconstruction net scale " + std::to_string(r->scale()) + " differs from sweep scale " +
                                std::to_string(scale));
  }
  std::vector<Image> gts;
  std::vector<Image> lrs;
  for (const auto& item : hr) {
    gts.push_back(crop_to_multiple(item.image, scale));
    lrs.push_back(bicubic_lr(gts.back(), scale));
  }
  const EvalProtocol protocol = protocol_for(scale);
  NoiseSweep sweep;
  for (double sigma : sigmas) {
    MetricReport bic;
    MetricReport learned;
    for (std::size_t i = 0; i < hr.size(); ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(seq);
      const Image noisy = quantize_u8(add_gaussian_noise(lrs[i], sigma, rng));
      bic.rows.push_back(evaluate_pair(hr[i].name, gts[i], bicubic_sr(noisy, scale), protocol));
      if (r != nullptr) {
        learned.rows.push_back(
            evaluate_pair(hr[i].name, gts[i], quantize_u8(super_resolve_tiled(*r, noisy, TileOptions{})), protocol));
      }
    }
    SweepRow row;
    row.sigma = sigma;
    row.bicubic_psnr = bic.mean_psnr();
    row.bicubic_ssim = bic.mean_ssim();
    if (r != nullptr) {
      row.learned_psnr = learned.mean_psnr();
      row.learned_ssim = learned.mean_ssim();
    }
    sweep.rows.push_back(row);
  }
  return sweep;
}

namespace {

void require(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("missing --") + key);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

// Reports go to `out` when no file is named; a named report gets the config
// echo next to it as <file>.config.
void emit_report(const RunConfig& config, const std::string& csv, std::ostream& out) {
  const auto path = config.options().out;
  if (path.empty()) {
    out << csv;
    return;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_text(path, csv);
  write_text(std::filesystem::path(path.string() + ".config"), config.echo());
}

template <typename F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int expected_scale(const RunConfig& config) { return config.has("scale") ? config.scale() : 0; }

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig tc = config.train_config();
    require(tc.hr_dir, "hr-dir");
    require(tc.out_dir, "out");
    tc.validate();
    const std::int64_t every = std::max<std::int64_t>(1, tc.iterations / 20);
    train(tc, [&](const TrainLogRow& row, Trainer&) {
      if (row.iteration % every == 0 || row.iteration == tc.iterations) err << format_log_row(row) << "\n";
    });
    err << "wrote " << (tc.out_dir / "final.ckpt").string() << "\n";
    return 0;
  });
}

int cmd_degrade(const RunConfig& config, std::ostream& err) {
  return guarded(err, [&] {
    const CommandOptions o = config.options();
    require(o.in, "in");
    require(o.out, "out");
    const DegradeMode mode = parse_degrade_mode(o.mode);
    int scale = config.scale();
    std::optional<DegradationNet> g;
    if (mode == DegradeMode::learned) {
      require(o.checkpoint, "checkpoint");
      g.emplace(degradation_from_checkpoint(load_checkpoint(o.checkpoint), expected_scale(config)));
      scale = g->scale();
    }
    const auto images = load_image_dir(o.in);
    std::filesystem::create_directories(o.out);
    for (const auto& item : images) {
      Image hr = item.image;
      if (hr.width % scale != 0 || hr.height % scale != 0) {
        const Image cropped = crop_to_multiple(hr, scale);
        err << "warning: " << item.name << " is " << hr.width << "x" << hr.height << ", cropped to " << cropped.width
            << "x" << cropped.height << " (multiple of " << scale << ")\n";
        hr = cropped;
      }
      if (hr.width == 0 || hr.height == 0) {
        err << "warning: " << item.name << " is smaller than the scale factor, skipped\n";
        continue;
      }
      save_image(o.out / item.name, degrade_image(hr, mode, scale, g ? &*g : nullptr));
    }
    return 0;
  });
}

int cmd_sr(const RunConfig& config, std::ostream& err) {
  return guarded(err, [&] {
    const CommandOptions o = config.options();
    require(o.checkpoint, "checkpoint");
    require(o.in, "in");
    require(o.out, "out");
    const ReconstructionNet r = reconstruction_from_checkpoint(load_checkpoint(o.checkpoint), expected_scale(config));
    const auto images = load_image_dir(o.in);
    std::filesystem::create_directories(o.out);
    for (const auto& item : images) {
      save_image(o.out / item.name, super_resolve_tiled(r, item.image, TileOptions{o.tile, o.overlap}));
    }
    return 0;
  });
}

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CommandOptions o = config.options();
    require(o.ref, "ref");
    require(o.in, "in");
    const MetricReport report = evaluate(o.ref, o.in, protocol_for(config.scale()));
    emit_report(config, report.to_csv(), out);
    return 0;
  });
}

int cmd_sweep_noise(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CommandOptions o = config.options();
    require(o.in, "in");
    int scale = config.scale();
    std::optional<ReconstructionNet> r;
    if (!o.checkpoint.empty()) {
      r.emplace(reconstruction_from_checkpoint(load_checkpoint(o.checkpoint), expected_scale(config)));
      scale = r->scale();
    }
    const auto images = load_image_dir(o.in);
    const NoiseSweep sweep = sweep_noise(images, o.sigmas, scale, r ? &*r : nullptr, config.train_config().seed);
    emit_report(config, sweep.to_csv(), out);
    return 0;
  });
}

}  // namespace degsr
