#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "degsr/cli.hpp"

namespace degsr {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + ": expected " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) bad_value(key, value, expected);
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  return parse_number<int>(key, value, "an integer");
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
  return parse_number<std::int64_t>(key, value, "an integer");
}

double parse_real(const std::string& key, const std::string& value) {
  return parse_number<double>(key, value, "a number");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& value, F one) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(one(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list");
  return out;
}

template <typename T>
std::string render_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string render_bool(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string render_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + render_number(v[i]);
  return out;
}

using Apply = std::function<void(TrainConfig&, CommandOptions&, const std::string& key, const std::string& value)>;
using Render = std::function<std::string(const TrainConfig&, const CommandOptions&)>;

struct Entry {
  RunConfig::Key key;
  Apply apply;    // empty for the keys that select the base profile
  Render render;
};

const std::vector<Entry>& table() {
  using TC = TrainConfig;
  using CO = CommandOptions;
  using S = const std::string&;
  static const std::vector<Entry> entries = {
      {{"profile", "default settings: paper or desk"}, {}, {}},
      {{"scale", "upscaling factor: 2 or 4"}, {}, [](const TC& t, const CO&) { return render_number(t.scale); }},
      {{"ablation", "full, no_dm, no_d or no_cycle"},
       [](TC& t, CO&, S, S v) { t.ablation = parse_ablation(v); },
       [](const TC& t, const CO&) { return to_string(t.ablation); }},
      {{"seed", "master random seed"},
       [](TC& t, CO&, S k, S v) { t.seed = parse_number<std::uint64_t>(k, v, "a non-negative integer"); },
       [](const TC& t, const CO&) { return render_number(t.seed); }},
      {{"batch_size", "images per minibatch"},
       [](TC& t, CO&, S k, S v) { t.batch_size = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.batch_size); }},
      {{"hr_patch", "HR training patch side"},
       [](TC& t, CO&, S k, S v) { t.hr_patch = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.hr_patch); }},
      {{"iterations", "training iterations"},
       [](TC& t, CO&, S k, S v) { t.iterations = parse_i64(k, v); },
       [](const TC& t, const CO&) { return render_number(t.iterations); }},
      {{"checkpoint_every", "iterations between checkpoints, 0 for none"},
       [](TC& t, CO&, S k, S v) { t.checkpoint_every = parse_i64(k, v); },
       [](const TC& t, const CO&) { return render_number(t.checkpoint_every); }},
      {{"hr_dir", "directory of HR training images"},
       [](TC& t, CO&, S, S v) { t.hr_dir = v; },
       [](const TC& t, const CO&) { return t.hr_dir.string(); }},
      {{"lr_dir", "directory of real LR training images"},
       [](TC& t, CO&, S, S v) { t.lr_dir = v; },
       [](const TC& t, const CO&) { return t.lr_dir.string(); }},
      {{"hr_manifest", "optional list of HR files"},
       [](TC& t, CO&, S, S v) { t.hr_manifest = v; },
       [](const TC& t, const CO&) { return t.hr_manifest.string(); }},
      {{"lr_manifest", "optional list of LR files"},
       [](TC& t, CO&, S, S v) { t.lr_manifest = v; },
       [](const TC& t, const CO&) { return t.lr_manifest.string(); }},
      {{"alpha", "adversarial weight"},
       [](TC& t, CO&, S k, S v) { t.weights.alpha = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.weights.alpha); }},
      {{"beta", "perceptual weight"},
       [](TC& t, CO&, S k, S v) { t.weights.beta = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.weights.beta); }},
      {{"eta", "cycle weight of the reconstruction objective"},
       [](TC& t, CO&, S k, S v) { t.weights.eta = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.weights.eta); }},
      {{"gamma", "total variation weight"},
       [](TC& t, CO&, S k, S v) { t.weights.gamma = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.weights.gamma); }},
      {{"squared_norms", "squared norms in perceptual and TV terms"},
       [](TC& t, CO&, S k, S v) { t.weights.squared_norms = parse_bool(k, v); },
       [](const TC& t, const CO&) { return render_bool(t.weights.squared_norms); }},
      {{"base_lr", "initial learning rate"},
       [](TC& t, CO&, S k, S v) { t.schedule.base_lr = parse_real(k, v); },
       [](const TC& t, const CO&) { return render_number(t.schedule.base_lr); }},
      {{"halve_every", "iterations between learning rate halvings"},
       [](TC& t, CO&, S k, S v) { t.schedule.halve_every = parse_i64(k, v); },
       [](const TC& t, const CO&) { return render_number(t.schedule.halve_every); }},
      {{"total_steps", "nominal schedule length"},
       [](TC& t, CO&, S k, S v) { t.schedule.total_steps = parse_i64(k, v); },
       [](const TC& t, const CO&) { return render_number(t.schedule.total_steps); }},
      {{"adam_beta1", "Adam first moment decay"},
       [](TC& t, CO&, S k, S v) { t.adam.beta1 = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.adam.beta1); }},
      {{"adam_beta2", "Adam second moment decay"},
       [](TC& t, CO&, S k, S v) { t.adam.beta2 = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.adam.beta2); }},
      {{"adam_eps", "Adam epsilon"},
       [](TC& t, CO&, S k, S v) { t.adam.eps = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.adam.eps); }},
      {{"weight_decay", "weight decay on conv weights"},
       [](TC& t, CO&, S k, S v) { t.adam.weight_decay = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.adam.weight_decay); }},
      {{"decoupled_decay", "apply decay directly to weights"},
       [](TC& t, CO&, S k, S v) { t.adam.decoupled = parse_bool(k, v); },
       [](const TC& t, const CO&) { return render_bool(t.adam.decoupled); }},
      {{"g_width", "degradation net width"},
       [](TC& t, CO&, S k, S v) { t.g.width = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.g.width); }},
      {{"g_blocks", "degradation net residual blocks"},
       [](TC& t, CO&, S k, S v) { t.g.blocks = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.g.blocks); }},
      {{"g_downsample_first", "downsample right after the head conv"},
       [](TC& t, CO&, S k, S v) { t.g.downsample_first = parse_bool(k, v); },
       [](const TC& t, const CO&) { return render_bool(t.g.downsample_first); }},
      {{"r_width", "reconstruction net width"},
       [](TC& t, CO&, S k, S v) { t.r.width = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.r.width); }},
      {{"r_blocks", "reconstruction net residual blocks"},
       [](TC& t, CO&, S k, S v) { t.r.blocks = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.r.blocks); }},
      {{"r_residual_scale", "residual branch scale"},
       [](TC& t, CO&, S k, S v) { t.r.residual_scale = static_cast<float>(parse_real(k, v)); },
       [](const TC& t, const CO&) { return render_number(t.r.residual_scale); }},
      {{"d_widths", "discriminator conv widths, comma separated"},
       [](TC& t, CO&, S k, S v) { t.d_widths = parse_list<int>(k, v, parse_int); },
       [](const TC& t, const CO&) { return render_list(t.d_widths); }},
      {{"d_steps", "discriminator updates per iteration"},
       [](TC& t, CO&, S k, S v) { t.d_steps = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.d_steps); }},
      {{"perceptual_size", "feature extractor input side"},
       [](TC& t, CO&, S k, S v) { t.perceptual_size = parse_int(k, v); },
       [](const TC& t, const CO&) { return render_number(t.perceptual_size); }},
      {{"perceptual_weights", "checkpoint file with feature extractor weights"},
       [](TC& t, CO&, S, S v) { t.perceptual_weights = v; },
       [](const TC& t, const CO&) { return t.perceptual_weights.string(); }},
      {{"checkpoint", "checkpoint file"},
       [](TC&, CO& o, S, S v) { o.checkpoint = v; },
       [](const TC&, const CO& o) { return o.checkpoint.string(); }},
      {{"in", "input directory"},
       [](TC&, CO& o, S, S v) { o.in = v; },
       [](const TC&, const CO& o) { return o.in.string(); }},
      {{"out", "output directory or file"},
       [](TC& t, CO& o, S, S v) {
         o.out = v;
         t.out_dir = v;
       },
       [](const TC&, const CO& o) { return o.out.string(); }},
      {{"ref", "ground-truth directory for eval"},
       [](TC&, CO& o, S, S v) { o.ref = v; },
       [](const TC&, const CO& o) { return o.ref.string(); }},
      {{"mode", "degradation mode: learned, bicubic or nearest"},
       [](TC&, CO& o, S, S v) {
         parse_degrade_mode(v);
         o.mode = v;
       },
       [](const TC&, const CO& o) { return o.mode; }},
      {{"sigmas", "noise levels in percent, comma separated"},
       [](TC&, CO& o, S k, S v) {
         o.sigmas = parse_list<double>(k, v, parse_real);
         for (double s : o.sigmas) {
           if (!(s >= 0)) bad_value(k, v, "non-negative noise levels");
         }
       },
       [](const TC&, const CO& o) { return render_list(o.sigmas); }},
      {{"tile", "LR tile side for sr"},
       [](TC&, CO& o, S k, S v) {
         o.tile = parse_int(k, v);
         if (o.tile < 1) bad_value(k, v, "a positive tile size");
       },
       [](const TC&, const CO& o) { return render_number(o.tile); }},
      {{"overlap", "LR overlap between sr tiles"},
       [](TC&, CO& o, S k, S v) {
         o.overlap = parse_int(k, v);
         if (o.overlap < 0) bad_value(k, v, "a non-negative overlap");
       },
       [](const TC&, const CO& o) { return render_number(o.overlap); }},
  };
  return entries;
}

const Entry* find_entry(std::string_view name) {
  for (const auto& e : table()) {
    if (e.key.name == name) return &e;
  }
  return nullptr;
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t min_cp[] = {0, 0x80, 0x800, 0x10000};
    if (cp < min_cp[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

TrainConfig base_config(const std::string& profile, int scale) {
  return profile == "desk" ? TrainConfig::desk(scale) : TrainConfig::paper(scale);
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> out = [] {
    std::vector<Key> k;
    for (const auto& e : table()) k.push_back(e.key);
    return k;
  }();
  return out;
}

bool RunConfig::is_key(std::string_view name) { return find_entry(name) != nullptr; }

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  if (!valid_utf8(text)) throw ConfigError(origin + ": not valid UTF-8");
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + ": " + key + " already set on line " + std::to_string(it->second));
    }
    seen[key] = line_no;
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (e == nullptr) throw ConfigError("unknown config key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw ConfigError("value for " + key + " spans several lines");
  if (key == "profile") {
    if (value != "paper" && value != "desk") bad_value(key, value, "paper or desk");
  } else if (key == "scale") {
    const int s = parse_int(key, value);
    if (s != 2 && s != 4) bad_value(key, value, "2 or 4");
  } else {
    TrainConfig t = TrainConfig::paper(4);
    CommandOptions o;
    try {
      e->apply(t, o, key, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError("invalid value '" + value + "' for " + key + ": " + ex.what());
    }
  }
  assigned_[key] = value;
}

int RunConfig::scale() const {
  auto it = assigned_.find("scale");
  return it == assigned_.end() ? 4 : std::stoi(it->second);
}

namespace {

void resolve(const std::map<std::string, std::string>& assigned, int scale, TrainConfig& t, CommandOptions& o) {
  auto it = assigned.find("profile");
  t = base_config(it == assigned.end() ? "paper" : it->second, scale);
  for (const auto& e : table()) {
    if (!e.apply) continue;
    if (auto a = assigned.find(e.key.name); a != assigned.end()) e.apply(t, o, e.key.name, a->second);
  }
}

}  // namespace

std::string RunConfig::echo() const {
  TrainConfig t;
  CommandOptions o;
  resolve(assigned_, scale(), t, o);
  std::string out;
  for (const auto& e : table()) {
    std::string value;
    if (e.key.name == "profile") {
      auto it = assigned_.find("profile");
      value = it == assigned_.end() ? "paper" : it->second;
    } else {
      value = e.render(t, o);
    }
    out += e.key.name + "=" + value + "\n";
  }
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  CommandOptions o;
  resolve(assigned_, scale(), t, o);
  t.config_echo = echo();
  return t;
}

CommandOptions RunConfig::options() const {
  TrainConfig t;
  CommandOptions o;
  resolve(assigned_, scale(), t, o);
  return o;
}

}  // namespace degsr
