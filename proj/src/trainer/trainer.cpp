#include "degsr/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "degsr/classical.hpp"
#include "degsr/ops.hpp"

namespace degsr {

using json = nlohmann::json;

Ablation parse_ablation(const std::string& text) {
  if (text == "full") return Ablation::full;
  if (text == "no_dm") return Ablation::no_dm;
  if (text == "no_d") return Ablation::no_d;
  if (text == "no_cycle") return Ablation::no_cycle;
  throw std::invalid_argument("unknown ablation mode '" + text + "' (expected full, no_dm, no_d or no_cycle)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_dm: return "no_dm";
    case Ablation::no_d: return "no_d";
    case Ablation::no_cycle: return "no_cycle";
  }
  return "unknown";
}

TrainConfig TrainConfig::paper(int scale) {
  require_scale(scale);
  TrainConfig c;
  c.scale = scale;
  c.g.scale = scale;
  c.r = ReconstructionNetConfig::for_scale(scale);
  return c;
}

TrainConfig TrainConfig::desk(int scale) {
  TrainConfig c = paper(scale);
  c.batch_size = 4;
  c.hr_patch = 48;
  c.iterations = 2000;
  c.g.width = 32;
  c.g.blocks = 4;
  c.r.width = 64;
  c.r.blocks = 4;
  c.r.residual_scale = 1.0f;
  c.perceptual_size = 16;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (scale != 2 && scale != 4) fail("scale must be 2 or 4, got " + std::to_string(scale));
  if (batch_size < 1) fail("batch_size must be at least 1, got " + std::to_string(batch_size));
  if (hr_patch < scale || hr_patch % scale != 0) {
    fail("hr_patch " + std::to_string(hr_patch) + " is not a positive multiple of the scale " + std::to_string(scale));
  }
  if (g.scale != scale) fail("degradation net scale " + std::to_string(g.scale) + " differs from the run scale");
  if (r.scale != scale) fail("reconstruction net scale " + std::to_string(r.scale) + " differs from the run scale");
  if (iterations < 0) fail("iterations must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (d_steps < 1) fail("d_steps must be at least 1");
  if (perceptual_size < 8 || perceptual_size % 8 != 0) fail("perceptual_size must be a positive multiple of 8");
  if (schedule.halve_every < 1) fail("halve_every must be positive");
  if (!(weights.alpha >= 0 && weights.beta >= 0 && weights.eta >= 0 && weights.gamma >= 0)) {
    fail("loss weights must be non-negative");
  }
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("bad number '" + std::string(s) + "'");
  return v;
}

std::optional<double>* field_slot(LossBreakdown& b, const std::string& name) {
  std::optional<double>* slots[] = {&b.adv, &b.per, &b.cyc, &b.l1, &b.tv, &b.disc, &b.deg, &b.rec, &b.total};
  const auto& names = loss_field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return slots[i];
  }
  return nullptr;
}

void require_batch(const Tensor& t, int size, const char* what) {
  if (!t.defined() || t.shape().n < 1) throw std::invalid_argument(std::string(what) + " batch is empty");
  if (t.shape().c != 3 || t.shape().h != size || t.shape().w != size) {
    throw std::invalid_argument(std::string(what) + " batch has shape " + t.shape().str() + ", expected Nx3x" +
                                std::to_string(size) + "x" + std::to_string(size));
  }
}

void finish_update(ModelParams& params, Adam& opt, float lr) {
  opt.step(lr);
  params.clear_grad();
}

json adam_json(const Adam& a) {
  const AdamConfig& c = a.config();
  return {{"steps", a.steps()},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"decoupled", c.decoupled}};
}

json parse_descriptor(const Checkpoint& ckpt) {
  try {
    return json::parse(ckpt.descriptor);
  } catch (const json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint descriptor is not valid JSON: ") + e.what());
  }
}

void export_adam(Checkpoint& ckpt, const std::string& net, const ModelParams& params, const Adam& opt) {
  const auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ckpt.tensors.push_back({"adam." + net + ".m." + items[i].name, opt.first_moments()[i].clone()});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    ckpt.tensors.push_back({"adam." + net + ".v." + items[i].name, opt.second_moments()[i].clone()});
  }
}

void import_adam(const Checkpoint& ckpt, const json& desc, const std::string& net, const ModelParams& params,
                 Adam& opt) {
  std::vector<Tensor> m, v;
  for (const auto& p : params.items()) {
    for (const char* kind : {"m", "v"}) {
      const std::string name = "adam." + net + "." + kind + "." + p.name;
      const Tensor* t = ckpt.find(name);
      if (t == nullptr) throw CheckpointShapeError("checkpoint has no tensor " + name);
      if (t->shape() != p.tensor.shape()) {
        throw CheckpointShapeError("tensor " + name + " has shape " + t->shape().str() + " in the checkpoint but " +
                                   p.tensor.shape().str() + " in the network");
      }
      (kind[0] == 'm' ? m : v).push_back(t->clone());
    }
  }
  opt.restore(desc.at("adam").at(net).at("steps").get<std::int64_t>(), m, v);
}

json g_json(const DegradationNetConfig& c) {
  return {{"scale", c.scale}, {"width", c.width}, {"blocks", c.blocks}, {"downsample_first", c.downsample_first}};
}

json r_json(const ReconstructionNetConfig& c) {
  return {{"scale", c.scale}, {"width", c.width}, {"blocks", c.blocks}, {"residual_scale", c.residual_scale}};
}

DegradationNetConfig g_from_json(const json& j) {
  DegradationNetConfig c;
  c.scale = j.at("scale").get<int>();
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.downsample_first = j.at("downsample_first").get<bool>();
  return c;
}

ReconstructionNetConfig r_from_json(const json& j) {
  ReconstructionNetConfig c;
  c.scale = j.at("scale").get<int>();
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.residual_scale = j.at("residual_scale").get<float>();
  return c;
}

void check_scale(const json& desc, int expected_scale) {
  const int scale = desc.at("scale").get<int>();
  if (expected_scale != 0 && scale != expected_scale) {
    throw CheckpointShapeError("checkpoint was trained for scale " + std::to_string(scale) + " but scale " +
                               std::to_string(expected_scale) + " was requested");
  }
}

// Sub-seeds for the independent random streams of one run.
struct Seeds {
  std::uint64_t g, r, d, p, hr_data, lr_data;
  explicit Seeds(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x64656773u};
    std::uint64_t out[6];
    std::uint32_t words[12];
    seq.generate(std::begin(words), std::end(words));
    for (int i = 0; i < 6; ++i) out[i] = static_cast<std::uint64_t>(words[2 * i]) << 32 | words[2 * i + 1];
    g = out[0];
    r = out[1];
    d = out[2];
    p = out[3];
    hr_data = out[4];
    lr_data = out[5];
  }
};

}  // namespace

std::string format_log_row(const TrainLogRow& row) {
  std::string line = std::to_string(row.iteration) + "\t" + format_double(row.lr);
  for (const auto& [name, value] : row.losses.fields()) line += "\t" + name + "=" + format_double(value);
  return line;
}

TrainLogRow parse_log_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, '\t');) cells.push_back(cell);
  if (cells.size() < 2) throw std::invalid_argument("log line has fewer than two columns: " + line);
  TrainLogRow row;
  row.iteration = std::stoll(cells[0]);
  row.lr = parse_double(cells[1]);
  for (std::size_t i = 2; i < cells.size(); ++i) {
    const auto eq = cells[i].find('=');
    if (eq == std::string::npos) throw std::invalid_argument("log cell without '=': " + cells[i]);
    auto* slot = field_slot(row.losses, cells[i].substr(0, eq));
    if (slot == nullptr) throw std::invalid_argument("unknown loss field in log: " + cells[i]);
    *slot = parse_double(std::string_view(cells[i]).substr(eq + 1));
  }
  return row;
}

Trainer::Trainer(const TrainConfig& config) : config_(config) {
  config_.validate();
  const Seeds seeds(config_.seed);
  r_ = std::make_unique<ReconstructionNet>(config_.r);
  init_params(r_->params(), seeds.r);
  r_->params().set_requires_grad(true);
  opt_r_ = std::make_unique<Adam>(r_->params(), config_.adam);
  if (config_.ablation == Ablation::no_dm) return;

  g_ = std::make_unique<DegradationNet>(config_.g);
  init_params(g_->params(), seeds.g);
  g_->params().set_requires_grad(true);
  opt_g_ = std::make_unique<Adam>(g_->params(), config_.adam);
  p_ = std::make_unique<FeatureExtractor>(FeatureExtractorConfig{config_.perceptual_size}, seeds.p);
  if (!config_.perceptual_weights.empty()) {
    import_params(load_checkpoint(config_.perceptual_weights), "P.", p_->params());
  }
  if (config_.ablation != Ablation::no_d) {
    DiscriminatorConfig dc;
    dc.input_size = config_.lr_patch();
    dc.widths = config_.d_widths;
    d_ = std::make_unique<Discriminator>(dc);
    init_params(d_->params(), seeds.d);
    d_->params().set_requires_grad(true);
    opt_d_ = std::make_unique<Adam>(d_->params(), config_.adam);
  }
}

DegradationNet& Trainer::degradation() {
  if (!g_) throw std::logic_error("ablation " + to_string(config_.ablation) + " has no degradation net");
  return *g_;
}

Discriminator& Trainer::discriminator() {
  if (!d_) throw std::logic_error("ablation " + to_string(config_.ablation) + " has no discriminator");
  return *d_;
}

LossBreakdown Trainer::train_step_degradation(const Tensor& x, const Tensor& z, double lr) {
  if (!g_) throw std::logic_error("the degradation step needs a degradation net (ablation no_dm has none)");
  require_batch(x, config_.hr_patch, "HR");
  require_batch(z, config_.lr_patch(), "real LR");
  const LossWeights& w = config_.weights;
  const bool with_cycle = config_.ablation != Ablation::no_cycle;
  LossBreakdown out;

  r_->params().set_requires_grad(false);
  g_->params().set_requires_grad(true);
  Tape tape;
  Tensor y_hat;
  {
    TapeScope scope(tape);
    y_hat = g_->forward(x);
  }

  if (d_) {
    d_->params().set_requires_grad(true);
    const Tensor fake = y_hat.detach();
    for (int k = 0; k < config_.d_steps; ++k) {
      Tape d_tape;
      Tensor l_d;
      {
        TapeScope scope(d_tape);
        l_d = discriminator_loss(*d_, z, fake);
      }
      if (k == 0) out.disc = l_d.item();
      backward(l_d, d_tape);
      finish_update(d_->params(), *opt_d_, static_cast<float>(lr));
    }
    d_->params().set_requires_grad(false);
  }

  Tensor l_adv, l_per, l_cyc, l_deg;
  {
    TapeScope scope(tape);
    if (d_) l_adv = adversarial_loss(*d_, y_hat);
    l_per = perceptual_loss(*p_, y_hat, x, w.squared_norms);
    if (with_cycle) {
      Tensor z_tilde;
      {
        NoGradScope no_grad;
        z_tilde = r_->forward(z);
      }
      l_cyc = l1_loss(g_->forward(z_tilde), z);
    }
    l_deg = degradation_objective(l_cyc, l_adv, l_per, w);
  }
  backward(l_deg, tape);
  finish_update(g_->params(), *opt_g_, static_cast<float>(lr));
  r_->params().set_requires_grad(true);
  if (d_) d_->params().set_requires_grad(true);

  if (l_adv) out.adv = l_adv.item();
  out.per = l_per.item();
  if (l_cyc) out.cyc = l_cyc.item();
  return out;
}

Tensor Trainer::degrade(const Tensor& x) const {
  NoGradScope no_grad;
  if (g_) return g_->forward(x);
  std::vector<Image> lr;
  lr.reserve(static_cast<std::size_t>(x.shape().n));
  for (int n = 0; n < x.shape().n; ++n) {
    lr.push_back(quantize_u8(bicubic_resize(to_image(x, n), config_.scale, Direction::down)));
  }
  return to_tensor(lr);
}

LossBreakdown Trainer::train_step_reconstruction(const Tensor& x, double lr) {
  require_batch(x, config_.hr_patch, "HR");
  const LossWeights& w = config_.weights;
  if (g_) g_->params().set_requires_grad(false);
  const Tensor y_hat = degrade(x);

  r_->params().set_requires_grad(true);
  Tape tape;
  Tensor l_1, l_tv, objective;
  {
    TapeScope scope(tape);
    const Tensor x_hat = r_->forward(y_hat);
    l_1 = l1_loss(x_hat, x);
    l_tv = tv_loss(x_hat, w.squared_norms);
    objective = reconstruction_objective(l_1, Tensor(), l_tv, w);
  }
  backward(objective, tape);
  finish_update(r_->params(), *opt_r_, static_cast<float>(lr));
  if (g_) g_->params().set_requires_grad(true);

  LossBreakdown out;
  out.l1 = l_1.item();
  out.tv = l_tv.item();
  return out;
}

LossBreakdown Trainer::train_step_cycle(const Tensor& z, double lr) {
  if (config_.ablation == Ablation::no_cycle || config_.ablation == Ablation::no_dm) {
    throw std::logic_error("the cycle step is disabled under ablation " + to_string(config_.ablation));
  }
  require_batch(z, config_.lr_patch(), "real LR");
  r_->params().set_requires_grad(true);
  g_->params().set_requires_grad(true);
  Tape tape;
  Tensor l_cyc;
  {
    TapeScope scope(tape);
    l_cyc = cycle_loss(*g_, *r_, z);
  }
  backward(l_cyc, tape);
  // R minimizes eta * L_cyc, G minimizes L_cyc.
  const float eta = config_.weights.eta;
  for (const auto& p : r_->params().items()) {
    Tensor t = p.tensor;
    for (float& g : t.grad()) g *= eta;
  }
  finish_update(r_->params(), *opt_r_, static_cast<float>(lr));
  finish_update(g_->params(), *opt_g_, static_cast<float>(lr));

  LossBreakdown out;
  out.cyc = l_cyc.item();
  return out;
}

TrainLogRow Trainer::step(const Tensor& x, const Tensor& z) {
  const auto start = std::chrono::steady_clock::now();
  TrainLogRow row;
  row.lr = lr_at(config_.schedule, iteration_);
  row.iteration = iteration_ + 1;

  LossBreakdown& b = row.losses;
  if (g_) {
    const LossBreakdown s1 = train_step_degradation(x, z, row.lr);
    b.adv = s1.adv;
    b.per = s1.per;
    b.cyc = s1.cyc;
    b.disc = s1.disc;
  }
  const LossBreakdown s2 = train_step_reconstruction(x, row.lr);
  b.l1 = s2.l1;
  b.tv = s2.tv;
  if (g_ && config_.ablation != Ablation::no_cycle) train_step_cycle(z, row.lr);
  b.compose(config_.weights);

  ++iteration_;
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

double Trainer::reconstruction_l1(const Tensor& x) const {
  const Tensor y_hat = degrade(x);
  NoGradScope no_grad;
  return l1_loss(r_->forward(y_hat), x).item();
}

Checkpoint Trainer::checkpoint() const {
  json desc;
  desc["format"] = "degsr-checkpoint";
  desc["iteration"] = iteration_;
  desc["scale"] = config_.scale;
  desc["ablation"] = to_string(config_.ablation);
  desc["config"] = config_.config_echo;
  json nets;
  json adam;
  nets["R"] = r_json(r_->config());
  adam["R"] = adam_json(*opt_r_);
  if (g_) {
    nets["G"] = g_json(g_->config());
    adam["G"] = adam_json(*opt_g_);
    nets["P"] = {{"input_size", p_->input_size()},
                 {"seed", p_->seed()},
                 {"weights", config_.perceptual_weights.string()}};
  }
  if (d_) {
    nets["D"] = {{"input_size", d_->config().input_size},
                 {"widths", d_->config().widths},
                 {"leaky_slope", d_->config().leaky_slope}};
    adam["D"] = adam_json(*opt_d_);
  }
  desc["networks"] = nets;
  desc["adam"] = adam;

  Checkpoint ckpt;
  if (g_) export_params(ckpt, "G.", g_->params());
  export_params(ckpt, "R.", r_->params());
  if (d_) export_params(ckpt, "D.", d_->params());
  if (g_) export_adam(ckpt, "G", g_->params(), *opt_g_);
  export_adam(ckpt, "R", r_->params(), *opt_r_);
  if (d_) export_adam(ckpt, "D", d_->params(), *opt_d_);
  desc["tensor_count"] = ckpt.tensors.size();
  ckpt.descriptor = desc.dump();
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  const json desc = parse_descriptor(ckpt);
  try {
    // Tensor shapes first so a scale or width mismatch reports the tensor involved.
    if (g_) import_params(ckpt, "G.", g_->params());
    import_params(ckpt, "R.", r_->params());
    if (d_) import_params(ckpt, "D.", d_->params());
    check_scale(desc, config_.scale);
    const std::string mode = desc.at("ablation").get<std::string>();
    if (mode != to_string(config_.ablation)) {
      throw CheckpointShapeError("checkpoint was trained with ablation " + mode + ", not " +
                                 to_string(config_.ablation));
    }
    const json& nets = desc.at("networks");
    if (r_from_json(nets.at("R")) != r_->config()) throw CheckpointShapeError("reconstruction net settings differ");
    if (g_ && g_from_json(nets.at("G")) != g_->config()) throw CheckpointShapeError("degradation net settings differ");
    if (p_ && (nets.at("P").at("input_size").get<int>() != p_->input_size() ||
               nets.at("P").at("seed").get<std::uint64_t>() != p_->seed() ||
               nets.at("P").at("weights").get<std::string>() != config_.perceptual_weights.string())) {
      throw CheckpointShapeError("feature extractor settings differ");
    }
    if (g_) import_adam(ckpt, desc, "G", g_->params(), *opt_g_);
    import_adam(ckpt, desc, "R", r_->params(), *opt_r_);
    if (d_) import_adam(ckpt, desc, "D", d_->params(), *opt_d_);
    iteration_ = desc.at("iteration").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint descriptor is incomplete: ") + e.what());
  }
}

ReconstructionNet reconstruction_from_checkpoint(const Checkpoint& ckpt, int expected_scale) {
  const json desc = parse_descriptor(ckpt);
  try {
    ReconstructionNet r(r_from_json(desc.at("networks").at("R")));
    if (expected_scale != 0 && r.scale() != expected_scale) {
      // Report through the first tensor whose shape differs, as restore() does.
      ReconstructionNetConfig want = r.config();
      want.scale = expected_scale;
      ReconstructionNet probe(want);
      import_params(ckpt, "R.", probe.params());
    }
    check_scale(desc, expected_scale);
    import_params(ckpt, "R.", r.params());
    return r;
  } catch (const json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint descriptor is incomplete: ") + e.what());
  }
}

DegradationNet degradation_from_checkpoint(const Checkpoint& ckpt, int expected_scale) {
  const json desc = parse_descriptor(ckpt);
  try {
    const json& nets = desc.at("networks");
    if (!nets.contains("G")) throw CheckpointShapeError("checkpoint has no degradation net (trained with no_dm)");
    check_scale(desc, expected_scale);
    DegradationNet g(g_from_json(nets.at("G")));
    import_params(ckpt, "G.", g.params());
    return g;
  } catch (const json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint descriptor is incomplete: ") + e.what());
  }
}

std::string checkpoint_config_echo(const Checkpoint& ckpt) { return parse_descriptor(ckpt).value("config", ""); }

std::int64_t checkpoint_iteration(const Checkpoint& ckpt) {
  return parse_descriptor(ckpt).value("iteration", std::int64_t{0});
}

namespace {

DatasetManifest open_dataset(const std::filesystem::path& dir, const std::filesystem::path& manifest,
                             DatasetRole role, const char* what) {
  if (dir.empty()) throw std::invalid_argument(std::string(what) + " directory is not set");
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error(std::string(what) + " directory not found: " + dir.string());
  }
  DatasetManifest m = manifest.empty() ? DatasetManifest::from_directory(dir, role)
                                       : DatasetManifest::from_file(manifest, dir, role);
  if (m.size() == 0) throw std::runtime_error(std::string(what) + " dataset is empty: " + dir.string());
  return m;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainObserver& observer) {
  config.validate();
  const Seeds seeds(config.seed);
  const bool needs_lr = config.ablation != Ablation::no_dm;

  // Every dataset problem surfaces here, before any network is built.
  BatchIterator hr(open_dataset(config.hr_dir, config.hr_manifest, DatasetRole::hr, "HR"), config.batch_size,
                   config.hr_patch, seeds.hr_data);
  std::optional<BatchIterator> lr;
  if (needs_lr) {
    lr.emplace(open_dataset(config.lr_dir, config.lr_manifest, DatasetRole::real_lr, "real LR"), config.batch_size,
               config.lr_patch(), seeds.lr_data);
  }

  std::ofstream log;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    log.open(config.out_dir / "train.log", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (config.out_dir / "train.log").string());
  }

  Trainer trainer(config);
  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(config.iterations));
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const Tensor x = hr.next();
    const Tensor z = lr ? lr->next() : Tensor();
    TrainLogRow row = trainer.step(x, z);
    if (log) log << format_log_row(row) << '\n' << std::flush;
    if (observer) observer(row, trainer);
    if (!config.out_dir.empty() && config.checkpoint_every > 0 && row.iteration % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "iter_%08lld.ckpt", static_cast<long long>(row.iteration));
      save_checkpoint(config.out_dir / name, trainer.checkpoint());
    }
    result.log.push_back(row);
  }
  result.final_checkpoint = trainer.checkpoint();
  if (!config.out_dir.empty()) save_checkpoint(config.out_dir / "final.ckpt", result.final_checkpoint);
  return result;
}

}  // namespace degsr
