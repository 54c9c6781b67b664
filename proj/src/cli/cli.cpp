#include <algorithm>
#include <map>

#include "CLI11.hpp"
#include "degsr/cli.hpp"

namespace degsr {

namespace {

std::string flag_name(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '_', '-');
  return "--" + out;
}

struct SubcommandArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_common(CLI::App& sub, SubcommandArgs& args) {
  sub.add_option("--config", args.config_path, "key=value config file")->check(CLI::ExistingFile);
  sub.add_option("--set", args.sets, "extra key=value assignment, may repeat");
  for (const auto& key : RunConfig::keys()) {
    args.options[key.name] = sub.add_option(flag_name(key.name), args.values[key.name], key.help);
  }
}

RunConfig build_config(const SubcommandArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : RunConfig::load(args.config_path);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, opt] : args.options) {
    if (opt->count() > 0) cfg.set(key, args.values.at(key));
  }
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unpaired super-resolution with a learned degradation model"};
  app.name("degsr");
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"train", "train the networks and write checkpoints and train.log to --out"},
      {"degrade", "downscale every image in --in with --mode learned, bicubic or nearest"},
      {"sr", "super-resolve every image in --in with the checkpoint's reconstruction net"},
      {"eval", "score --in against --ref (PSNR and SSIM on luminance) as CSV"},
      {"sweep-noise", "bicubic and learned scores on --in for each noise level in --sigmas"},
  };
  std::map<std::string, SubcommandArgs> args;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    subs[c.name] = app.add_subcommand(c.name, c.help);
    add_common(*subs[c.name], args[c.name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (const auto& c : commands) {
    if (!subs[c.name]->parsed()) continue;
    RunConfig cfg;
    try {
      cfg = build_config(args[c.name]);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 2;
    }
    const std::string name = c.name;
    if (name == "train") return cmd_train(cfg, err);
    if (name == "degrade") return cmd_degrade(cfg, err);
    if (name == "sr") return cmd_sr(cfg, err);
    if (name == "eval") return cmd_eval(cfg, out, err);
    return cmd_sweep_noise(cfg, out, err);
  }
  return 2;
}

}  // namespace degsr
