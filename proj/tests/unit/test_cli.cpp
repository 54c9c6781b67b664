#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "degsr/cli.hpp"
#include "degsr/dataio.hpp"

using namespace degsr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("degsr_test_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

Image test_image(const char* name) { return load_image(fs::path(DEGSR_TEST_DATA) / name); }

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "degsr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A few HR tiles and bicubic LR tiles from the bundled photos plus a config
// file for a tiny three-iteration run.
struct TinyRun {
  fs::path root, hr, lr, config;
};

TinyRun tiny_run(const std::string& tag, const std::string& extra = "") {
  TinyRun t;
  t.root = fresh_dir(tag);
  t.hr = t.root / "hr";
  t.lr = t.root / "lr";
  fs::create_directories(t.hr);
  fs::create_directories(t.lr);
  int index = 0;
  for (const char* name : {"astronaut.png", "coffee.png"}) {
    const Image img = test_image(name);
    for (int k = 0; k < 2; ++k) {
      save_image(t.hr / ("t" + std::to_string(index) + ".png"), crop(img, 30 * k, 30 * k, 32, 32));
      const Image other = crop(img, 200 + 20 * k, 150, 64, 64);
      save_image(t.lr / ("t" + std::to_string(index) + ".png"), bicubic_resize(other, 4, Direction::down));
      ++index;
    }
  }
  t.config = t.root / "run.cfg";
  write_text(t.config, "# tiny run\nprofile = desk\nscale=4\nhr_patch=16\nbatch_size=2\ng_width=8\ng_blocks=1\n"
                       "r_width=8\nr_blocks=1\nd_widths=8,8,8,8\nperceptual_size=8\niterations=3\nseed=3\n"
                       "hr_dir=" + t.hr.string() + "\nlr_dir=" + t.lr.string() + "\n" + extra);
  return t;
}

float max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_size(b));
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("run config parses files and rejects unknown keys") {
  const RunConfig c = RunConfig::parse("# comment\n\nscale = 2\nseed=11\nd_widths = 4, 8\nsquared_norms=true\n");
  const TrainConfig t = c.train_config();
  CHECK(t.scale == 2);
  CHECK(t.r.scale == 2);
  CHECK(t.g.scale == 2);
  CHECK(t.seed == 11);
  CHECK(t.d_widths == std::vector<int>{4, 8});
  CHECK(t.weights.squared_norms);

  CHECK_THROWS_AS(RunConfig::parse("scale=4\nlearning_rate=1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("scale=3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed=abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed=1\nseed=2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("just text\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("ablation=partial\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("hr_dir=\xff\xfe\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("hr_dir=\xc0\xaf\n"), ConfigError);  // overlong encoding
  try {
    RunConfig::parse("seed=1\nbogus=2\n", "my.cfg");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("my.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  const RunConfig utf = RunConfig::parse("hr_dir=/data/images/caf\xc3\xa9\n");
  CHECK(utf.train_config().hr_dir.string() == "/data/images/caf\xc3\xa9");
}

TEST_CASE("run config profiles and echo") {
  const RunConfig paper = RunConfig::parse("");
  CHECK(paper.train_config().hr_patch == 240);
  CHECK(paper.train_config().r.width == 256);

  RunConfig desk = RunConfig::parse("profile=desk\nbase_lr=0.0002\nalpha=0.25\nsigmas=0,1.5\n");
  desk.set("r_blocks", "2");
  const TrainConfig t = desk.train_config();
  CHECK(t.hr_patch == 48);
  CHECK(t.r.blocks == 2);
  CHECK(t.schedule.base_lr == 0.0002);
  CHECK(t.weights.alpha == 0.25f);
  CHECK(desk.options().sigmas == std::vector<double>{0, 1.5});

  const std::string echo = desk.echo();
  CHECK(echo.find("profile=desk\n") != std::string::npos);
  CHECK(echo.find("r_blocks=2\n") != std::string::npos);
  CHECK(echo.find("alpha=0.25\n") != std::string::npos);
  CHECK(t.config_echo == echo);
  // Every key appears exactly once, in table order.
  std::istringstream lines(echo);
  std::string line;
  std::size_t k = 0;
  while (std::getline(lines, line)) {
    REQUIRE(k < RunConfig::keys().size());
    CHECK(line.rfind(RunConfig::keys()[k].name + "=", 0) == 0);
    ++k;
  }
  CHECK(k == RunConfig::keys().size());
  // The echo is a fixed point of parsing.
  CHECK(RunConfig::parse(echo).echo() == echo);
  CHECK_THROWS_AS(desk.set("nope", "1"), ConfigError);
}

TEST_CASE("command line flags override config keys") {
  const fs::path dir = fresh_dir("flags");
  const Image img = crop(test_image("coffee.png"), 0, 0, 40, 40);
  fs::create_directories(dir / "a");
  save_image(dir / "a" / "x.png", img);
  write_text(dir / "c.cfg", "seed=3\nscale=2\n");

  const Run r = run({"eval", "--config", (dir / "c.cfg").string(), "--seed", "9", "--set", "scale=4", "--ref",
                     (dir / "a").string(), "--in", (dir / "a").string(), "--out", (dir / "report.csv").string()});
  REQUIRE(r.code == 0);
  const std::string echo = read_text(dir / "report.csv.config");
  CHECK(echo.find("seed=9\n") != std::string::npos);
  CHECK(echo.find("scale=4\n") != std::string::npos);
  RunConfig expected = RunConfig::parse("seed=3\nscale=2\n");
  expected.set("scale", "4");
  expected.set("seed", "9");
  expected.set("ref", (dir / "a").string());
  expected.set("in", (dir / "a").string());
  expected.set("out", (dir / "report.csv").string());
  CHECK(echo == expected.echo());

  CHECK(run({"eval", "--set", "bogus=1"}).code != 0);
  CHECK(run({"eval", "--bogus", "1"}).code != 0);
  CHECK(run({"frobnicate"}).code != 0);
  CHECK(run({"eval", "--scale", "3", "--ref", "a", "--in", "b"}).code != 0);
}

TEST_CASE("train writes checkpoints whose echo matches the parsed config") {
  const TinyRun t = tiny_run("train");
  const fs::path out = t.root / "run";
  const Run r = run({"train", "--config", t.config.string(), "--out", out.string(), "--ablation", "no_cycle"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const Checkpoint ckpt = load_checkpoint(out / "final.ckpt");
  RunConfig expected = RunConfig::load(t.config);
  expected.set("out", out.string());
  expected.set("ablation", "no_cycle");
  CHECK(checkpoint_config_echo(ckpt) == expected.echo());
  CHECK(checkpoint_iteration(ckpt) == 3);

  std::ifstream log(out / "train.log");
  std::string line;
  int rows = 0;
  while (std::getline(log, line)) {
    const TrainLogRow row = parse_log_row(line);
    CHECK_FALSE(row.losses.cyc.has_value());
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("train fails cleanly on a missing dataset") {
  const TinyRun t = tiny_run("missing");
  const fs::path out = t.root / "run";
  const fs::path ghost = t.root / "no_such_dir";
  const Run r = run({"train", "--config", t.config.string(), "--out", out.string(), "--hr-dir", ghost.string()});
  CHECK(r.code != 0);
  CHECK(r.err.find(ghost.string()) != std::string::npos);
  CHECK_FALSE(fs::exists(out / "final.ckpt"));
  CHECK_FALSE(fs::exists(out / "final.ckpt.partial"));
}

TEST_CASE("degrade modes") {
  const TinyRun t = tiny_run("degrade");
  REQUIRE(run({"train", "--config", t.config.string(), "--out", (t.root / "run").string()}).code == 0);
  const fs::path ckpt = t.root / "run" / "final.ckpt";

  const fs::path in = t.root / "in";
  fs::create_directories(in);
  const Image square = crop(test_image("astronaut.png"), 100, 100, 240, 240);
  save_image(in / "square.png", square);

  REQUIRE(run({"degrade", "--in", in.string(), "--out", (t.root / "bic").string(), "--mode", "bicubic"}).code == 0);
  const Image bic = load_image(t.root / "bic" / "square.png");
  CHECK(bic.width == 60);
  CHECK(bic.height == 60);
  CHECK(bic == quantize_u8(bicubic_resize(square, 4, Direction::down)));

  REQUIRE(run({"degrade", "--in", in.string(), "--out", (t.root / "near").string(), "--mode", "nearest", "--scale",
               "2"})
              .code == 0);
  CHECK(load_image(t.root / "near" / "square.png") == nearest_resize(square, 2, Direction::down));

  const Run learned = run({"degrade", "--in", in.string(), "--out", (t.root / "learned").string(), "--mode", "learned",
                           "--checkpoint", ckpt.string()});
  REQUIRE(learned.code == 0);
  const Image g_out = load_image(t.root / "learned" / "square.png");
  CHECK(g_out.width == 60);
  CHECK(max_abs_diff(g_out, bic) > 0.0f);

  // The checkpoint was trained at x4.
  const Run mismatch = run({"degrade", "--in", in.string(), "--out", (t.root / "bad").string(), "--mode", "learned",
                            "--checkpoint", ckpt.string(), "--scale", "2"});
  CHECK(mismatch.code != 0);
  CHECK_FALSE(fs::exists(t.root / "bad" / "square.png"));

  // Sizes that are not multiples of the scale are cropped with a warning.
  const fs::path odd = t.root / "odd";
  fs::create_directories(odd);
  save_image(odd / "o.png", crop(square, 0, 0, 50, 43));
  const Run cropped = run({"degrade", "--in", odd.string(), "--out", (t.root / "odd_out").string(), "--mode", "bicubic"});
  REQUIRE(cropped.code == 0);
  CHECK(cropped.err.find("warning") != std::string::npos);
  const Image small = load_image(t.root / "odd_out" / "o.png");
  CHECK(small.width == 12);
  CHECK(small.height == 10);
}

TEST_CASE("tiled super-resolution matches the untiled result") {
  for (int scale : {2, 4}) {
    ReconstructionNetConfig cfg = ReconstructionNetConfig::for_scale(scale, 2);
    cfg.width = 8;
    ReconstructionNet r(cfg);
    init_params(r.params(), 21);
    const Image lr = crop(test_image("chelsea.png"), 150, 60, 61, 47);
    const Image whole = super_resolve(r, lr);
    CHECK(whole.width == 61 * scale);
    CHECK(whole.height == 47 * scale);
    for (auto [tile, overlap] : {std::pair{16, 4}, std::pair{48, 8}, std::pair{20, 0}, std::pair{7, 6}}) {
      CAPTURE(tile);
      const Image tiled = super_resolve_tiled(r, lr, TileOptions{tile, overlap});
      CHECK(max_abs_diff(tiled, whole) < 1e-3f);
    }
  }
}

TEST_CASE("sr command output size and determinism") {
  const TinyRun t = tiny_run("sr");
  REQUIRE(run({"train", "--config", t.config.string(), "--out", (t.root / "run").string()}).code == 0);
  const fs::path ckpt = t.root / "run" / "final.ckpt";
  const fs::path in = t.root / "lr_in";
  fs::create_directories(in);
  save_image(in / "a.png", crop(test_image("coffee.png"), 10, 10, 60, 60));

  const fs::path out1 = t.root / "sr1";
  const fs::path out2 = t.root / "sr2";
  REQUIRE(run({"sr", "--checkpoint", ckpt.string(), "--in", in.string(), "--out", out1.string()}).code == 0);
  REQUIRE(run({"sr", "--checkpoint", ckpt.string(), "--in", in.string(), "--out", out2.string()}).code == 0);
  const Image a = load_image(out1 / "a.png");
  CHECK(a.width == 240);
  CHECK(a.height == 240);
  CHECK(read_text(out1 / "a.png") == read_text(out2 / "a.png"));
  CHECK(run({"sr", "--checkpoint", ckpt.string(), "--in", in.string(), "--out", out1.string(), "--scale", "2"}).code != 0);
  CHECK(run({"sr", "--checkpoint", (t.root / "nothing.ckpt").string(), "--in", in.string(), "--out", out1.string()})
            .code != 0);
}

TEST_CASE("eval command reproduces evaluate") {
  const fs::path dir = fresh_dir("eval");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "sr");
  const Image img = crop(test_image("astronaut.png"), 0, 0, 64, 64);
  save_image(dir / "gt" / "a.png", img);
  save_image(dir / "sr" / "a.png", quantize_u8(bicubic_resize(bicubic_resize(img, 2, Direction::down), 2, Direction::up)));
  const Run r = run({"eval", "--ref", (dir / "gt").string(), "--in", (dir / "sr").string(), "--scale", "2"});
  REQUIRE(r.code == 0);
  EvalProtocol p;
  p.shave = 2;
  CHECK(r.out == evaluate(dir / "gt", dir / "sr", p).to_csv());
}

TEST_CASE("noise sweep rows, degenerate sigma and monotone bicubic column") {
  const fs::path dir = fresh_dir("sweep");
  fs::create_directories(dir / "hr");
  save_image(dir / "hr" / "a.png", crop(test_image("astronaut.png"), 64, 64, 160, 160));
  save_image(dir / "hr" / "b.png", crop(test_image("coffee.png"), 100, 50, 122, 98));
  const auto images = load_image_dir(dir / "hr");

  const Run r = run({"sweep-noise", "--in", (dir / "hr").string(), "--sigmas", "1,2,3,4,5,6,7", "--seed", "4",
                     "--out", (dir / "sweep.csv").string()});
  REQUIRE(r.code == 0);
  std::istringstream csv(read_text(dir / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "sigma,bicubic_psnr_db,bicubic_ssim,learned_psnr_db,learned_ssim");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 7);
  CHECK(fs::exists(dir / "sweep.csv.config"));

  const NoiseSweep sweep = sweep_noise(images, {0, 1, 2, 3, 4, 5, 6, 7}, 4, nullptr, 4);
  for (std::size_t i = 1; i < sweep.rows.size(); ++i) CHECK(sweep.rows[i].bicubic_psnr <= sweep.rows[i - 1].bicubic_psnr);

  // Noiseless pipeline through the degrade, upscale and eval commands.
  fs::create_directories(dir / "gt");
  for (const auto& item : images) save_image(dir / "gt" / item.name, crop_to_multiple(item.image, 4));
  REQUIRE(run({"degrade", "--in", (dir / "gt").string(), "--out", (dir / "lr").string(), "--mode", "bicubic"}).code == 0);
  fs::create_directories(dir / "up");
  for (const auto& item : load_image_dir(dir / "lr")) {
    save_image(dir / "up" / item.name, bicubic_resize(item.image, 4, Direction::up));
  }
  const Run plain = run({"eval", "--ref", (dir / "gt").string(), "--in", (dir / "up").string()});
  REQUIRE(plain.code == 0);
  const MetricReport baseline = bicubic_baseline(images, 4);
  CHECK(plain.out == baseline.to_csv());
  CHECK(sweep.rows[0].bicubic_psnr == baseline.mean_psnr());
  CHECK(sweep.rows[0].bicubic_ssim == baseline.mean_ssim());
  CHECK_FALSE(sweep.rows[0].learned_psnr.has_value());
}

TEST_CASE("noise sweep learned column") {
  ReconstructionNetConfig cfg = ReconstructionNetConfig::for_scale(2, 1);
  cfg.width = 8;
  ReconstructionNet r(cfg);
  init_params(r.params(), 5);
  std::vector<NamedImage> images{{"a.png", crop(test_image("chelsea.png"), 100, 100, 64, 64)}};
  const NoiseSweep a = sweep_noise(images, {0, 3}, 2, &r, 1);
  const NoiseSweep b = sweep_noise(images, {0, 3}, 2, &r, 1);
  REQUIRE(a.rows[0].learned_psnr.has_value());
  CHECK(a.to_csv() == b.to_csv());
  CHECK_THROWS(sweep_noise(images, {0}, 4, &r, 1));
}
