#include "degsr/classical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "degsr/dataio.hpp"

namespace degsr {

namespace {

double cubic(double x) {
  // Keys cubic convolution kernel with a = -0.5
  const double ax = std::fabs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

// Symmetric extension: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int mirror(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
};

// Per-output-sample taps for resampling a line of `in` samples to `out`.
std::vector<Taps> resample_taps(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const bool shrink = scale < 1.0;
  const double width = shrink ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(width)) + 2;
  std::vector<Taps> result(out);
  for (int i = 0; i < out; ++i) {
    // Position of output sample i (1-based centre) in 1-based input coordinates.
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    Taps& t = result[i];
    double total = 0.0;
    for (int k = 0; k < taps; ++k) {
      const int j = left + k;
      const double d = u - j;
      const double w = shrink ? scale * cubic(scale * d) : cubic(d);
      if (w == 0.0) continue;
      t.index.push_back(mirror(j - 1, in));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return result;
}

void require_positive(int w, int h, const char* op) {
  if (w < 1 || h < 1) {
    throw std::invalid_argument(std::string(op) + ": degenerate output size " + std::to_string(w) + "x" +
                                std::to_string(h));
  }
}

void require_image(const Image& img, const char* op) {
  if (img.width < 1 || img.height < 1) throw std::invalid_argument(std::string(op) + ": empty input image");
}

std::pair<int, int> factor_size(const Image& img, int factor, Direction direction, const char* op) {
  if (factor < 1) throw std::invalid_argument(std::string(op) + ": factor must be positive");
  if (direction == Direction::up) return {img.width * factor, img.height * factor};
  if (img.width % factor != 0 || img.height % factor != 0) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " is not divisible by " + std::to_string(factor));
  }
  return {img.width / factor, img.height / factor};
}

}  // namespace

Downsampler parse_downsampler(const std::string& name) {
  if (name == "bicubic") return Downsampler::bicubic;
  if (name == "nearest") return Downsampler::nearest;
  if (name == "stride_pick" || name == "stride-pick") return Downsampler::stride_pick;
  throw std::invalid_argument("unknown downsampler " + name);
}

Image bicubic_resize(const Image& img, int out_w, int out_h) {
  require_image(img, "bicubic_resize");
  require_positive(out_w, out_h, "bicubic_resize");
  const auto rows = resample_taps(img.height, out_h);
  const auto cols = resample_taps(img.width, out_w);
  Image out(out_w, out_h, img.channels);
  std::vector<double> tmp(static_cast<std::size_t>(out_h) * img.width);
  for (int c = 0; c < img.channels; ++c) {
    // Vertical pass first, then horizontal.
    for (int y = 0; y < out_h; ++y) {
      const Taps& t = rows[y];
      double* dst = &tmp[static_cast<std::size_t>(y) * img.width];
      std::fill_n(dst, img.width, 0.0);
      for (std::size_t k = 0; k < t.index.size(); ++k) {
        const float* src = &img.data[c * img.plane() + static_cast<std::size_t>(t.index[k]) * img.width];
        const double w = t.weight[k];
        for (int x = 0; x < img.width; ++x) dst[x] += w * src[x];
      }
    }
    for (int y = 0; y < out_h; ++y) {
      const double* src = &tmp[static_cast<std::size_t>(y) * img.width];
      for (int x = 0; x < out_w; ++x) {
        const Taps& t = cols[x];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * src[t.index[k]];
        out.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image bicubic_resize(const Image& img, int factor, Direction direction) {
  const auto [w, h] = factor_size(img, factor, direction, "bicubic_resize");
  return bicubic_resize(img, w, h);
}

Image nearest_resize(const Image& img, int out_w, int out_h) {
  require_image(img, "nearest_resize");
  require_positive(out_w, out_h, "nearest_resize");
  Image out(out_w, out_h, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < out_h; ++y) {
      const int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height / out_h);
      for (int x = 0; x < out_w; ++x) {
        const int sx = static_cast<int>(static_cast<std::int64_t>(x) * img.width / out_w);
        out.at(c, y, x) = std::clamp(img.at(c, sy, sx), 0.0f, 1.0f);
      }
    }
  return out;
}

Image nearest_resize(const Image& img, int factor, Direction direction) {
  const auto [w, h] = factor_size(img, factor, direction, "nearest_resize");
  return nearest_resize(img, w, h);
}

BlurKernel BlurKernel::identity() { return {1, {1.0f}}; }

BlurKernel BlurKernel::gaussian(int size, double sigma) {
  if (size < 1 || size % 2 == 0 || sigma <= 0.0) throw std::invalid_argument("gaussian kernel needs odd size and sigma > 0");
  BlurKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  double total = 0.0;
  std::vector<double> w(k.weights.size());
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      w[(y + r) * size + (x + r)] = v;
      total += v;
    }
  for (std::size_t i = 0; i < w.size(); ++i) k.weights[i] = static_cast<float>(w[i] / total);
  return k;
}

BlurKernel BlurKernel::uniform(int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("uniform kernel needs an odd size");
  return {size, std::vector<float>(static_cast<std::size_t>(size) * size, 1.0f / static_cast<float>(size * size))};
}

double BlurKernel::sum() const {
  double total = 0.0;
  for (float w : weights) total += w;
  return total;
}

Image blur(const Image& img, const BlurKernel& kernel) {
  require_image(img, "blur");
  if (kernel.size < 1 || kernel.size % 2 == 0 || kernel.weights.size() != static_cast<std::size_t>(kernel.size) * kernel.size) {
    throw std::invalid_argument("blur: kernel must be a square odd-sized stencil");
  }
  if (std::fabs(kernel.sum() - 1.0) > 1e-6) throw std::invalid_argument("blur: kernel must sum to 1");
  const int r = kernel.size / 2;
  Image out(img.width, img.height, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int ky = -r; ky <= r; ++ky) {
          const int sy = mirror(y + ky, img.height);
          for (int kx = -r; kx <= r; ++kx) {
            acc += static_cast<double>(kernel.weights[(ky + r) * kernel.size + (kx + r)]) *
                   img.at(c, sy, mirror(x + kx, img.width));
          }
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
  return out;
}

Image synth_degrade(const Image& img, const SyntheticDegradationConfig& cfg, std::mt19937_64& rng) {
  if (cfg.scale != 2 && cfg.scale != 4) throw std::invalid_argument("synth_degrade: scale must be 2 or 4");
  if (cfg.noise_percent < 0.0) throw std::invalid_argument("synth_degrade: negative noise level");
  if (img.width % cfg.scale != 0 || img.height % cfg.scale != 0) {
    throw std::invalid_argument("synth_degrade: " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " is not divisible by " + std::to_string(cfg.scale));
  }
  const Image blurred = blur(img, cfg.kernel);
  Image low;
  switch (cfg.downsampler) {
    case Downsampler::bicubic:
      low = bicubic_resize(blurred, cfg.scale, Direction::down);
      break;
    case Downsampler::nearest:
      low = nearest_resize(blurred, cfg.scale, Direction::down);
      break;
    case Downsampler::stride_pick: {
      low = Image(img.width / cfg.scale, img.height / cfg.scale, img.channels);
      for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < low.height; ++y)
          for (int x = 0; x < low.width; ++x) low.at(c, y, x) = blurred.at(c, y * cfg.scale, x * cfg.scale);
      break;
    }
  }
  Image noisy = add_gaussian_noise(low, cfg.noise_percent, rng);
  for (float& v : noisy.data) v = std::clamp(v, 0.0f, 1.0f);
  return noisy;
}

Image add_gaussian_noise(const Image& img, double sigma_percent, std::mt19937_64& rng) {
  if (sigma_percent < 0.0 || sigma_percent > 100.0) throw std::invalid_argument("noise level must be in [0, 100]");
  if (sigma_percent == 0.0) return img;
  const double sigma = sigma_percent / 100.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  Image out = img;
  for (float& v : out.data) v = static_cast<float>(std::clamp(v + sigma * normal(rng), 0.0, 1.0));
  return out;
}

std::vector<double> luminance(const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("luminance needs an RGB image");
  std::vector<double> y(img.plane());
  const std::size_t p = img.plane();
  for (std::size_t i = 0; i < p; ++i) {
    y[i] = 16.0 + 65.481 * img.data[i] + 128.553 * img.data[p + i] + 24.966 * img.data[2 * p + i];
  }
  return y;
}

namespace {

Plane shave_plane(const std::vector<double>& full, int w, int h, int shave) {
  if (shave < 0 || 2 * shave >= w || 2 * shave >= h) throw std::invalid_argument("border shave leaves no pixels");
  Plane p;
  p.width = w - 2 * shave;
  p.height = h - 2 * shave;
  p.data.reserve(static_cast<std::size_t>(p.width) * p.height);
  for (int y = shave; y < h - shave; ++y)
    for (int x = shave; x < w - shave; ++x) p.data.push_back(full[static_cast<std::size_t>(y) * w + x]);
  return p;
}

void require_same(const Plane& a, const Plane& b, const char* op) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(op) + ": size mismatch " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height));
  }
}

// Separable 'valid' filtering of a plane with a normalized 1-D window.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += win[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += win[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

Plane luminance_plane(const Image& img, int shave) { return shave_plane(luminance(img), img.width, img.height, shave); }

Plane channel_plane(const Image& img, int channel, double scale, int shave) {
  std::vector<double> full(img.plane());
  for (std::size_t i = 0; i < full.size(); ++i) full[i] = scale * img.data[channel * img.plane() + i];
  return shave_plane(full, img.width, img.height, shave);
}

double psnr(const Plane& a, const Plane& b, double max_val) {
  require_same(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sse += d * d;
  }
  if (sse == 0.0) return kInfinitePsnr;
  const double mse = sse / static_cast<double>(a.data.size());
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const Image& a, const Image& b, double max_val) {
  if (!a.same_size(b)) throw std::invalid_argument("psnr: image sizes differ");
  Plane pa{a.width, a.height * a.channels, {a.data.begin(), a.data.end()}};
  Plane pb{b.width, b.height * b.channels, {b.data.begin(), b.data.end()}};
  return psnr(pa, pb, max_val);
}

double ssim(const Plane& a, const Plane& b, double range) {
  require_same(a, b, "ssim");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  if (a.width < kWindow || a.height < kWindow) {
    throw std::invalid_argument("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " is smaller than the 11x11 window");
  }
  std::vector<double> win(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    win[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += win[i];
  }
  for (double& v : win) v /= total;

  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const std::size_t n = a.data.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.data[i] * a.data[i];
    bb[i] = b.data[i] * b.data[i];
    ab[i] = a.data[i] * b.data[i];
  }
  const auto mu_a = filter_valid(a.data, a.width, a.height, win);
  const auto mu_b = filter_valid(b.data, a.width, a.height, win);
  const auto e_aa = filter_valid(aa, a.width, a.height, win);
  const auto e_bb = filter_valid(bb, a.width, a.height, win);
  const auto e_ab = filter_valid(ab, a.width, a.height, win);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

double MetricReport::mean_psnr() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : rows) acc += r.psnr_db;
  return acc / static_cast<double>(rows.size());
}

double MetricReport::mean_ssim() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : rows) acc += r.ssim;
  return acc / static_cast<double>(rows.size());
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "name,psnr_db,ssim\n";
  for (const auto& r : rows) os << r.name << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << '\n';
  os << "MEAN," << format_metric(mean_psnr()) << ',' << format_metric(mean_ssim()) << '\n';
  return os.str();
}

MetricRow evaluate_pair(const std::string& name, const Image& reference, const Image& candidate,
                        const EvalProtocol& protocol) {
  Image ref = reference;
  if (!ref.same_size(candidate)) {
    const int step = std::max(protocol.shave, 1);
    const bool croppable = ref.channels == candidate.channels && ref.width >= candidate.width &&
                           ref.height >= candidate.height && ref.width - candidate.width < step &&
                           ref.height - candidate.height < step;
    if (!croppable) {
      throw std::invalid_argument(name + ": reference " + std::to_string(ref.width) + "x" + std::to_string(ref.height) +
                                  " does not match candidate " + std::to_string(candidate.width) + "x" +
                                  std::to_string(candidate.height));
    }
    ref = crop(ref, 0, 0, candidate.width, candidate.height);
  }
  MetricRow row;
  row.name = name;
  if (protocol.luminance) {
    const Plane a = luminance_plane(ref, protocol.shave);
    const Plane b = luminance_plane(candidate, protocol.shave);
    row.psnr_db = psnr(a, b, 255.0);
    row.ssim = ssim(a, b, 255.0);
  } else {
    Plane a, b;
    double s = 0.0;
    for (int c = 0; c < ref.channels; ++c) {
      Plane pa = channel_plane(ref, c, 255.0, protocol.shave);
      Plane pb = channel_plane(candidate, c, 255.0, protocol.shave);
      s += ssim(pa, pb, 255.0);
      a.width = pa.width;
      a.height += pa.height;
      a.data.insert(a.data.end(), pa.data.begin(), pa.data.end());
      b.width = pb.width;
      b.height += pb.height;
      b.data.insert(b.data.end(), pb.data.begin(), pb.data.end());
    }
    row.psnr_db = psnr(a, b, 255.0);
    row.ssim = s / ref.channels;
  }
  return row;
}

MetricReport evaluate(const std::filesystem::path& reference_dir, const std::filesystem::path& candidate_dir,
                      const EvalProtocol& protocol) {
  const auto refs = DatasetManifest::from_directory(reference_dir, DatasetRole::eval_pair);
  const auto cands = DatasetManifest::from_directory(candidate_dir, DatasetRole::eval_pair);
  const std::set<std::string> cand_names(cands.files.begin(), cands.files.end());
  const std::set<std::string> ref_names(refs.files.begin(), refs.files.end());
  MetricReport report;
  for (const auto& name : refs.files) {
    if (cand_names.count(name) == 0) {
      std::cerr << "warning: " << name << " has no counterpart in " << candidate_dir.string() << ", skipped\n";
      continue;
    }
    report.rows.push_back(
        evaluate_pair(name, load_image(reference_dir / name), load_image(candidate_dir / name), protocol));
  }
  for (const auto& name : cands.files) {
    if (ref_names.count(name) == 0) {
      std::cerr << "warning: " << name << " has no counterpart in " << reference_dir.string() << ", skipped\n";
    }
  }
  if (report.rows.empty()) {
    throw std::runtime_error("no matching image names between " + reference_dir.string() + " and " +
                             candidate_dir.string());
  }
  return report;
}

}  // namespace degsr
