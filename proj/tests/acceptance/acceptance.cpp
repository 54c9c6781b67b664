// Acceptance checks. Prints one "criterion N: PASS|FAIL ..." line per
// criterion. Exit status: 0 when every selected criterion passes, 77 when the
// only failures come from missing external data (reported as skipped by
// ctest), 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "adam_trajectory.hpp"
#include "degsr/classical.hpp"
#include "degsr/cli.hpp"
#include "degsr/dataio.hpp"
#include "degsr/ops.hpp"
#include "degsr/simd/kernels.hpp"
#include "degsr/trainer.hpp"
#include "gradient_cases.hpp"
#include "loss_cases.hpp"

using namespace degsr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool missing_data = false;
};

struct Context {
  fs::path work;
  fs::path test_data;
  std::optional<fs::path> set5;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string sci(double v) {
  std::ostringstream ss;
  ss << std::scientific << std::setprecision(2) << v;
  return ss.str();
}

fs::path fresh(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<NamedImage> bundled_photos(const Context& ctx) { return load_image_dir(ctx.test_data); }

// ---------------------------------------------------------------------------
// 1. Bicubic anchor

constexpr double kAnchorPsnrTol = 0.35;
constexpr double kAnchorSsimTol = 0.01;
constexpr double kAnchorSeconds = 30.0;

Outcome bicubic_anchor(Context& ctx) {
  struct Target {
    int scale;
    double psnr, ssim;
  };
  const Target targets[] = {{4, 28.42, 0.810}, {2, 33.65, 0.930}};
  auto describe = [&](const std::vector<NamedImage>& images, bool& ok) {
    std::string s;
    for (const auto& t : targets) {
      const MetricReport r = bicubic_baseline(images, t.scale);
      const bool hit = std::fabs(r.mean_psnr() - t.psnr) <= kAnchorPsnrTol &&
                       std::fabs(r.mean_ssim() - t.ssim) <= kAnchorSsimTol;
      ok = ok && hit;
      s += " x" + std::to_string(t.scale) + " " + fixed(r.mean_psnr(), 2) + " dB/" + fixed(r.mean_ssim(), 3) +
           " (want " + fixed(t.psnr, 2) + "/" + fixed(t.ssim, 3) + ")";
    }
    return s;
  };
  if (!ctx.set5) {
    bool proxy_ok = true;
    const std::string proxy = describe(bundled_photos(ctx), proxy_ok);
    return {false, "Set5 not found (set DEGSR_SET5_DIR or --set5); bundled-photo proxy, informational:" + proxy, true};
  }
  const auto t0 = Clock::now();
  const auto images = load_image_dir(*ctx.set5);
  bool ok = images.size() == 5;
  std::string detail = std::to_string(images.size()) + " images;" + describe(images, ok);
  const double secs = seconds_since(t0);
  ok = ok && secs < kAnchorSeconds;
  return {ok, detail + "; " + fixed(secs, 1) + " s (limit 30 s)"};
}

// ---------------------------------------------------------------------------
// 2. Gradient suite

constexpr int kGradSeeds = 20;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;

Outcome gradient_suite(Context&) {
  const auto t0 = Clock::now();
  auto cases = oracle::op_gradient_cases();
  for (auto& c : oracle::loss_gradient_cases()) cases.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
      const oracle::GradCheck r = c.run(1000 + seed);
      ++checks;
      if (!(r.gradient_error <= worst)) {
        worst = r.gradient_error;
        worst_name = c.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst < kGradTol && secs < kGradSeconds;
  return {ok, std::to_string(cases.size()) + " cases x " + std::to_string(kGradSeeds) + " seeds (" +
                  std::to_string(checks) + " checks); worst relative error " + sci(worst) + " (" + worst_name +
                  ", limit 1e-4); " + fixed(secs, 1) + " s (limit 120 s)"};
}

// ---------------------------------------------------------------------------
// 3. Loss identities

constexpr int kIdentityTriples = 1000;
constexpr double kIdentityTol = 1e-6;

Outcome loss_identities(Context&) {
  std::vector<std::string> failures;
  auto zero = [&](const char* name, float v) {
    if (v != 0.0f) failures.push_back(std::string(name) + "=" + sci(v));
  };
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({2, 3, 16, 16}, rng, 0, 1);
  zero("adversarial(ones)", adversarial_loss(Tensor::full({4, 1, 1, 1}, 1.0f)).item());
  zero("discriminator(1,0)", discriminator_loss(Tensor::full({4, 1, 1, 1}, 1.0f), Tensor::zeros({4, 1, 1, 1})).item());
  FeatureExtractor p({16}, 1);
  zero("perceptual(x,x)", perceptual_loss(p, x, x).item());
  zero("tv(constant)", tv_loss(Tensor::full({2, 3, 8, 8}, 0.4f)).item());
  zero("l1(x,x)", l1_loss(x, x).item());
  // Stub degradation and reconstruction that invert each other exactly:
  // nearest x2 upsampling via pixel_shuffle, then stride-2 picking.
  auto up = [](const Tensor& z) {
    Tensor rep = Tensor::zeros({z.shape().n, z.shape().c * 4, z.shape().h, z.shape().w});
    for (int n = 0; n < z.shape().n; ++n)
      for (int c = 0; c < z.shape().c; ++c)
        for (int k = 0; k < 4; ++k)
          for (int yy = 0; yy < z.shape().h; ++yy)
            for (int xx = 0; xx < z.shape().w; ++xx) rep.at(n, c * 4 + k, yy, xx) = z.at(n, c, yy, xx);
    return pixel_shuffle(rep, 2);
  };
  auto down = [](const Tensor& y) {
    Tensor w = Tensor::zeros({y.shape().c, y.shape().c, 1, 1});
    for (int c = 0; c < y.shape().c; ++c) w.at(c, c, 0, 0) = 1.0f;
    return conv2d(y, w, Tensor(), 2, 0);
  };
  zero("cycle(inverses)", cycle_loss(down, up, oracle::random_tensor({2, 3, 6, 6}, rng, 0, 1)).item());
  const LossWeights defaults;
  const Tensor z0 = Tensor::zeros({1, 1, 1, 1});
  zero("L_deg(0,0,0)", degradation_objective(z0, z0, z0, defaults).item());
  zero("L_rec(0,0,0)", reconstruction_objective(z0, z0, z0, defaults).item());
  zero("L_total(0,0)", total_objective(z0, z0).item());
  const int zero_cases = 10;

  // Composite identities against a long double evaluation of the weighted sums.
  std::uniform_real_distribution<double> comp(0.0, 10.0);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  double worst = 0.0;
  auto rel = [](double got, long double want) {
    return static_cast<double>(std::fabs(static_cast<long double>(got) - want) / std::max(1.0L, std::fabs(want)));
  };
  for (int i = 0; i < kIdentityTriples; ++i) {
    LossWeights w = defaults;
    if (i % 2 == 1) {
      w.alpha = static_cast<float>(weight(rng));
      w.beta = static_cast<float>(weight(rng));
      w.eta = static_cast<float>(weight(rng));
      w.gamma = static_cast<float>(weight(rng));
    }
    const double cyc = comp(rng), adv = comp(rng), per = comp(rng);
    const double l1 = comp(rng), tv = comp(rng);
    const long double deg = cyc + static_cast<long double>(w.alpha) * adv + static_cast<long double>(w.beta) * per;
    const long double rec = l1 + static_cast<long double>(w.eta) * cyc + static_cast<long double>(w.gamma) * tv;
    const long double total = deg + rec;

    auto scalar = [](double v) { return Tensor::full({1, 1, 1, 1}, static_cast<float>(v)); };
    // Float tensors carry components rounded to float; compare against the
    // same rounded inputs.
    auto f = [](double v) { return static_cast<long double>(static_cast<float>(v)); };
    const long double deg_f = f(cyc) + static_cast<long double>(w.alpha) * f(adv) + static_cast<long double>(w.beta) * f(per);
    const long double rec_f = f(l1) + static_cast<long double>(w.eta) * f(cyc) + static_cast<long double>(w.gamma) * f(tv);
    const Tensor t_deg = degradation_objective(scalar(cyc), scalar(adv), scalar(per), w);
    const Tensor t_rec = reconstruction_objective(scalar(l1), scalar(cyc), scalar(tv), w);
    worst = std::max(worst, rel(t_deg.item(), deg_f));
    worst = std::max(worst, rel(t_rec.item(), rec_f));
    worst = std::max(worst, rel(total_objective(t_deg, t_rec).item(), deg_f + rec_f));

    worst = std::max(worst, rel(degradation_objective(cyc, adv, per, w), deg));
    worst = std::max(worst, rel(reconstruction_objective(l1, cyc, tv, w), rec));
    worst = std::max(worst, rel(total_objective(degradation_objective(cyc, adv, per, w),
                                                reconstruction_objective(l1, cyc, tv, w)),
                                total));
    LossBreakdown b;
    b.cyc = cyc;
    b.adv = adv;
    b.per = per;
    b.l1 = l1;
    b.tv = tv;
    b.compose(w);
    worst = std::max({worst, rel(*b.deg, deg), rel(*b.rec, rec), rel(*b.total, total)});
    if (!b.composite_identity_holds(w, kIdentityTol)) failures.push_back("breakdown audit at triple " + std::to_string(i));
  }
  if (worst >= kIdentityTol) failures.push_back("composite error " + sci(worst));
  std::string detail = std::to_string(zero_cases) + " zero-at-minimum cases, " + std::to_string(kIdentityTriples) +
                       " random component sets; worst composite relative error " + sci(worst) + " (limit 1e-6)";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 4. Shape laws

constexpr int kShuffleTensors = 100;

Outcome shape_laws(Context&) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> k(1, 9);
  std::uniform_int_distribution<int> batch(1, 3);
  int checks = 0;
  std::vector<std::string> failures;
  NoGradScope no_grad;
  for (int scale : {2, 4}) {
    for (bool early : {false, true}) {
      DegradationNet g({scale, 4, 1, early});
      init_params(g.params(), 3);
      ReconstructionNetConfig rc = ReconstructionNetConfig::for_scale(scale, 1);
      rc.width = 4;
      ReconstructionNet r(rc);
      init_params(r.params(), 4);
      for (int trial = 0; trial < 10; ++trial) {
        const int n = batch(rng), h = k(rng), w = k(rng);
        const Tensor hr = oracle::random_tensor({n, 3, h * scale, w * scale}, rng, 0, 1);
        const Shape gs = g.forward(hr).shape();
        if (gs != Shape{n, 3, h, w}) failures.push_back("G " + hr.shape().str() + " -> " + gs.str());
        const Tensor lr = oracle::random_tensor({n, 3, h, w}, rng, 0, 1);
        const Shape rs = r.forward(lr).shape();
        if (rs != Shape{n, 3, h * scale, w * scale}) failures.push_back("R " + lr.shape().str() + " -> " + rs.str());
        checks += 2;
        bool threw = false;
        try {
          g.forward(oracle::random_tensor({1, 3, h * scale + 1, w * scale}, rng, 0, 1));
        } catch (const ShapeError&) {
          threw = true;
        }
        if (!threw) failures.push_back("G accepted an indivisible size at scale " + std::to_string(scale));
        ++checks;
      }
    }
  }
  std::uniform_int_distribution<int> factor(2, 4);
  std::uniform_int_distribution<int> small(1, 5);
  for (int i = 0; i < kShuffleTensors; ++i) {
    const int f = factor(rng);
    const Tensor x = oracle::random_tensor({small(rng), small(rng) * f * f, small(rng), small(rng)}, rng);
    const Tensor y = pixel_shuffle(x, f);
    const oracle::Ref want = oracle::pixel_shuffle(oracle::from_tensor(x), f);
    bool same = y.shape() == Shape{want.n, want.c, want.h, want.w};
    for (std::size_t j = 0; same && j < want.size(); ++j) same = y.data()[j] == static_cast<float>(want.v[j]);
    std::vector<float> a(x.data().begin(), x.data().end()), b(y.data().begin(), y.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const Tensor back = pixel_unshuffle(y, f);
    const bool inverse = std::equal(back.data().begin(), back.data().end(), x.data().begin(), x.data().end());
    if (!same || a != b || !inverse) failures.push_back("pixel_shuffle tensor " + std::to_string(i) + " " + x.shape().str());
    ++checks;
  }
  std::string detail = std::to_string(checks) + " checks (G/R at x2 and x4, both G layouts; " +
                       std::to_string(kShuffleTensors) + " pixel_shuffle permutations)";
  for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 3); ++i) detail += "; " + failures[i];
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// Shared data for the training criteria: HR tiles from the left part of each
// bundled photo, "real" LR tiles made by blur, bicubic x4 and 2% noise from
// the same region, and a held-out HR batch from the right part.

struct SmokeData {
  fs::path hr, lr;
  Tensor held_out;
};

SmokeData smoke_data(const Context& ctx, const fs::path& root, int hr_tile, int lr_tile, int scale) {
  SmokeData d{fresh(root / "hr"), fresh(root / "lr"), {}};
  SyntheticDegradationConfig deg;
  deg.scale = scale;
  deg.noise_percent = 2.0;
  std::mt19937_64 rng(99);
  std::vector<Image> held;
  for (const auto& item : bundled_photos(ctx)) {
    const Image& img = item.image;
    const int split = img.width * 7 / 10;
    const std::string stem = fs::path(item.name).stem().string();
    int count = 0;
    for (int y = 0; y + hr_tile <= img.height; y += hr_tile) {
      for (int x = 0; x + hr_tile <= split; x += hr_tile) {
        save_image(d.hr / (stem + "_" + std::to_string(count++) + ".png"), crop(img, x, y, hr_tile, hr_tile));
      }
    }
    const int src = lr_tile * scale;
    count = 0;
    for (int y = src / 3; y + src <= img.height; y += src) {
      for (int x = src / 3; x + src <= split; x += src) {
        save_image(d.lr / (stem + "_" + std::to_string(count++) + ".png"), synth_degrade(crop(img, x, y, src, src), deg, rng));
      }
    }
    for (int j = 0; j < 2; ++j) held.push_back(crop(img, split + 8 + 40 * j, 16 + 100 * j, 48, 48));
  }
  held.resize(4);
  d.held_out = to_tensor(held);
  return d;
}

TrainConfig tiny_config(Ablation mode, const SmokeData& d, const fs::path& out) {
  TrainConfig c = TrainConfig::desk(4);
  c.ablation = mode;
  c.hr_patch = 16;
  c.batch_size = 2;
  c.g.width = 8;
  c.g.blocks = 1;
  c.r.width = 8;
  c.r.blocks = 1;
  c.d_widths = {8, 8, 8, 8};
  c.perceptual_size = 8;
  c.iterations = 4;
  c.seed = 5;
  c.hr_dir = d.hr;
  c.lr_dir = d.lr;
  c.out_dir = out;
  return c;
}

std::vector<TrainLogRow> read_log(const fs::path& path) {
  std::ifstream f(path);
  std::vector<TrainLogRow> rows;
  std::string line;
  while (std::getline(f, line)) rows.push_back(parse_log_row(line));
  return rows;
}

// ---------------------------------------------------------------------------
// 5. Training smoke

constexpr double kSmokeSeconds = 30.0 * 60.0;
constexpr std::int64_t kSmokeIterations = 2000;
constexpr std::uint64_t kSmokeSeed = 2024;

fs::path smoke_checkpoint(const Context& ctx) { return ctx.work / "smoke" / "run" / "final.ckpt"; }

Outcome training_smoke(Context& ctx) {
  const SmokeData data = smoke_data(ctx, ctx.work / "smoke" / "data", 96, 32, 4);
  TrainConfig c = TrainConfig::desk(4);
  c.seed = kSmokeSeed;
  c.iterations = kSmokeIterations;
  c.hr_dir = data.hr;
  c.lr_dir = data.lr;
  c.out_dir = fresh(ctx.work / "smoke" / "run");
  c.checkpoint_every = 500;
  c.config_echo = "acceptance smoke run, desk profile, seed " + std::to_string(kSmokeSeed) + "\n";

  std::map<std::int64_t, double> held_l1;
  std::map<std::int64_t, double> d_loss;
  const auto t0 = Clock::now();
  const TrainResult result = train(c, [&](const TrainLogRow& row, Trainer& t) {
    if (row.iteration == 50 || row.iteration == kSmokeIterations) held_l1[row.iteration] = t.reconstruction_l1(data.held_out);
    if (row.losses.disc && (row.iteration == 10 || row.iteration == kSmokeIterations)) d_loss[row.iteration] = *row.losses.disc;
    if (row.iteration % 250 == 0) {
      std::cerr << "  smoke " << row.iteration << "/" << kSmokeIterations << " " << fixed(seconds_since(t0), 0) << " s "
                << format_log_row(row) << "\n";
    }
  });
  const double secs = seconds_since(t0);

  int identity_failures = 0;
  for (const auto& row : result.log) identity_failures += row.losses.composite_identity_holds(c.weights) ? 0 : 1;
  const auto logged = read_log(c.out_dir / "train.log");
  for (const auto& row : logged) identity_failures += row.losses.composite_identity_holds(c.weights) ? 0 : 1;

  // Windowed discriminator means, reported for context only.
  auto window_mean = [&](std::int64_t from, std::int64_t to) {
    double acc = 0;
    int n = 0;
    for (const auto& row : result.log) {
      if (row.iteration >= from && row.iteration <= to && row.losses.disc) {
        acc += *row.losses.disc;
        ++n;
      }
    }
    return n ? acc / n : std::nan("");
  };

  const bool complete = static_cast<std::int64_t>(result.log.size()) == kSmokeIterations &&
                        static_cast<std::int64_t>(logged.size()) == kSmokeIterations;
  const bool have = held_l1.size() == 2 && d_loss.size() == 2;
  const bool a = complete && identity_failures == 0;
  const bool b = have && held_l1[kSmokeIterations] < held_l1[50];
  const bool cc = have && d_loss[kSmokeIterations] < d_loss[10];
  const bool fast = secs < kSmokeSeconds;
  std::string detail = fixed(secs / 60.0, 1) + " min (limit 30); (a) " + std::to_string(result.log.size()) +
                       " rows, identity failures " + std::to_string(identity_failures) + (a ? " ok" : " FAILED");
  if (have) {
    detail += "; (b) held-out L1 " + fixed(held_l1[50], 4) + " @50 -> " + fixed(held_l1[kSmokeIterations], 4) +
              " @2000" + (b ? " ok" : " FAILED");
    detail += "; (c) L_D " + fixed(d_loss[10], 4) + " @10 -> " + fixed(d_loss[kSmokeIterations], 4) + " @2000" +
              (cc ? " ok" : " FAILED") + " (means 1-50 " + fixed(window_mean(1, 50), 4) + ", 1951-2000 " +
              fixed(window_mean(1951, 2000), 4) + ")";
  }
  return {a && b && cc && fast, detail};
}

// ---------------------------------------------------------------------------
// 6. Ablation contract

Outcome ablation_contract(Context& ctx) {
  const SmokeData data = smoke_data(ctx, ctx.work / "ablation" / "data", 32, 8, 4);
  const std::map<Ablation, std::set<std::string>> want = {
      {Ablation::full, {"L_adv", "L_per", "L_cyc", "L_1", "L_tv", "L_D", "L_deg", "L_rec", "L_total"}},
      {Ablation::no_dm, {"L_1", "L_tv", "L_rec", "L_total"}},
      {Ablation::no_d, {"L_per", "L_cyc", "L_1", "L_tv", "L_deg", "L_rec", "L_total"}},
      {Ablation::no_cycle, {"L_adv", "L_per", "L_1", "L_tv", "L_D", "L_deg", "L_rec", "L_total"}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [mode, columns] : want) {
    const fs::path out = fresh(ctx.work / "ablation" / to_string(mode));
    train(tiny_config(mode, data, out));
    const auto rows = read_log(out / "train.log");
    bool match = !rows.empty();
    for (const auto& row : rows) {
      std::set<std::string> got;
      for (const auto& [name, value] : row.losses.fields()) got.insert(name);
      match = match && got == columns;
    }
    ok = ok && match;
    detail += (detail.empty() ? "" : "; ") + to_string(mode) + " " + std::to_string(rows.size()) + " rows " +
              (match ? "match" : "MISMATCH");
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 7. Optimizer oracle

constexpr double kAdamTol = 1e-10;

Outcome optimizer_oracle(Context&) {
  double theta = 1.0, m = 0.0, v = 0.0, worst = 0.0;
  for (std::size_t t = 1; t <= oracle::kAdamTrajectory.size(); ++t) {
    const double g = 2.0 * (theta - oracle::kAdamTarget);
    simd::reference::adam_element<double>(theta, g, m, v, oracle::kAdamLr, 0.9, 0.999, 1e-8, oracle::kAdamDecay, 0.0,
                                          1.0 - std::pow(0.9, static_cast<double>(t)),
                                          1.0 - std::pow(0.999, static_cast<double>(t)));
    worst = std::max(worst, std::fabs(theta - oracle::kAdamTrajectory[t - 1]));
  }
  const LrSchedule s;
  const bool lr_ok = lr_at(s, 0) == 1e-4 && lr_at(s, 200000) == 5e-5 && lr_at(s, 400000) == 2.5e-5;
  return {worst < kAdamTol && lr_ok, "10-step trajectory max deviation " + sci(worst) + " (limit 1e-10); lr_at(0, 2e5, 4e5) = " +
                                         sci(lr_at(s, 0)) + ", " + sci(lr_at(s, 200000)) + ", " + sci(lr_at(s, 400000)) +
                                         (lr_ok ? " exact" : " WRONG")};
}

// ---------------------------------------------------------------------------
// 8. Noise sweep

constexpr std::uint64_t kSweepSeed = 8;

Outcome noise_sweep(Context& ctx) {
  const std::vector<double> sigmas{1, 2, 3, 4, 5, 6, 7};
  std::optional<ReconstructionNet> r;
  std::string note;
  if (fs::exists(smoke_checkpoint(ctx))) {
    r.emplace(reconstruction_from_checkpoint(load_checkpoint(smoke_checkpoint(ctx)), 4));
  } else {
    note = "; desk checkpoint missing (run criterion 5 first)";
  }
  auto run = [&](const std::vector<NamedImage>& images, bool& monotone) {
    const NoiseSweep sweep = sweep_noise(images, sigmas, 4, r ? &*r : nullptr, kSweepSeed);
    monotone = true;
    std::string psnrs, learned;
    for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
      if (i > 0 && sweep.rows[i].bicubic_psnr > sweep.rows[i - 1].bicubic_psnr) monotone = false;
      psnrs += (i ? "," : "") + fixed(sweep.rows[i].bicubic_psnr, 2);
      if (sweep.rows[i].learned_psnr) learned += (i ? "," : "") + fixed(*sweep.rows[i].learned_psnr, 2);
    }
    return "bicubic PSNR " + psnrs + (learned.empty() ? "" : "; learned PSNR " + learned);
  };
  if (!ctx.set5) {
    bool proxy = false;
    const std::string s = run(bundled_photos(ctx), proxy);
    return {false, "Set5 not found (set DEGSR_SET5_DIR or --set5); bundled-photo proxy, informational: " + s +
                       (proxy ? " (non-increasing)" : " (NOT monotone)") + note,
            true};
  }
  bool monotone = false;
  const std::string s = run(load_image_dir(*ctx.set5), monotone);
  return {monotone && r.has_value(), s + (monotone ? " (non-increasing)" : " (NOT monotone)") + note};
}

// ---------------------------------------------------------------------------
// 9. Determinism and persistence

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome determinism(Context& ctx) {
  const SmokeData data = smoke_data(ctx, ctx.work / "determinism" / "data", 32, 8, 4);
  std::vector<std::string> failures;
  std::vector<fs::path> runs;
  for (const char* tag : {"a", "b"}) {
    const fs::path out = fresh(ctx.work / "determinism" / tag);
    TrainConfig c = tiny_config(Ablation::full, data, out);
    c.iterations = 6;
    c.checkpoint_every = 3;
    train(c);
    runs.push_back(out);
  }
  int compared = 0;
  for (const char* name : {"iter_00000003.ckpt", "iter_00000006.ckpt", "final.ckpt", "train.log"}) {
    const auto a = file_bytes(runs[0] / name);
    const auto b = file_bytes(runs[1] / name);
    if (a.empty() || a != b) failures.push_back(std::string(name) + " differs between identical runs");
    ++compared;
  }

  const auto bytes = file_bytes(runs[0] / "final.ckpt");
  const Checkpoint ckpt = parse_checkpoint(bytes);
  if (serialize_checkpoint(ckpt) != bytes) failures.push_back("parse/serialize round trip changed bytes");
  const fs::path copy = ctx.work / "determinism" / "copy.ckpt";
  save_checkpoint(copy, load_checkpoint(runs[0] / "final.ckpt"));
  if (file_bytes(copy) != bytes) failures.push_back("load/save round trip changed bytes");

  // Restore into a fresh trainer and checkpoint again.
  Trainer t(tiny_config(Ablation::full, data, {}));
  t.restore(ckpt);
  if (serialize_checkpoint(t.checkpoint()) != bytes) failures.push_back("restore/checkpoint round trip changed bytes");

  int rejected = 0, attempts = 0;
  auto expect_reject = [&](std::vector<std::uint8_t> b, const std::string& what) {
    ++attempts;
    try {
      parse_checkpoint(b);
      failures.push_back(what + " accepted");
    } catch (const CheckpointError&) {
      ++rejected;
    }
  };
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  for (int i = 0; i < 50; ++i) {
    auto b = bytes;
    b[pos(rng)] ^= static_cast<std::uint8_t>(1u << (i % 8));
    expect_reject(b, "bit flip " + std::to_string(i));
  }
  for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 3, bytes.size() - 1}) {
    expect_reject(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)),
                  "truncation to " + std::to_string(len));
  }
  std::string detail = std::to_string(compared) + " files bitwise identical across seeded runs; round trips checked; " +
                       std::to_string(rejected) + "/" + std::to_string(attempts) + " corrupted or truncated files rejected";
  for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 3); ++i) detail += "; " + failures[i];
  return {failures.empty(), detail};
}

std::optional<fs::path> find_set5(const std::string& flag) {
  std::vector<fs::path> candidates;
  if (!flag.empty()) candidates.emplace_back(flag);
  if (const char* env = std::getenv("DEGSR_SET5_DIR")) candidates.emplace_back(env);
  candidates.emplace_back(fs::path(DEGSR_SOURCE_DIR) / "data" / "Set5");
  for (const auto& c : candidates) {
    for (const auto& dir : {c, c / "HR", c / "original"}) {
      if (!fs::is_directory(dir)) continue;
      try {
        if (DatasetManifest::from_directory(dir, DatasetRole::eval_pair).size() > 0) return dir;
      } catch (const std::exception&) {
      }
    }
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  std::string work = DEGSR_ACCEPTANCE_WORK;
  std::string set5;
  app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--work", work, "scratch directory");
  app.add_option("--set5", set5, "directory with the five Set5 HR PNGs");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = work;
  ctx.test_data = DEGSR_TEST_DATA;
  ctx.set5 = find_set5(set5);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"bicubic anchor on Set5", bicubic_anchor},
      {"gradient suite", gradient_suite},
      {"loss identities", loss_identities},
      {"shape laws", shape_laws},
      {"desk training smoke", training_smoke},
      {"ablation contract", ablation_contract},
      {"optimizer oracle", optimizer_oracle},
      {"noise sweep on Set5", noise_sweep},
      {"determinism and persistence", determinism},
  };
  bool any_fail = false;
  bool any_hard_fail = false;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.detail << std::endl;
    any_fail = any_fail || !o.pass;
    any_hard_fail = any_hard_fail || (!o.pass && !o.missing_data);
  }
  if (any_hard_fail) return 1;
  return any_fail ? 77 : 0;
}
