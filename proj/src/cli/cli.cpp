#include "tkp/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "tkp/errors.hpp"
#include "tkp/evaluate.hpp"
#include "tkp/synthetic.hpp"
#include "tkp/text_format.hpp"

namespace tkp {
namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Entries as_entries(const std::vector<SettingEntry>& settings) {
  Entries out;
  for (const auto& s : settings) out.emplace_back(s.key, s.value);
  return out;
}

// Re-throws a ConfigError raised while applying settings with the file
// line of the offending key.
template <typename Fn>
void with_line_context(const std::filesystem::path& file, const std::vector<SettingEntry>& settings, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& s : settings) {
      if (msg.rfind(s.key + ":", 0) == 0) {
        throw ConfigError(file.string() + ":" + std::to_string(s.line) + ": " + msg);
      }
    }
    throw ConfigError(file.string() + ": " + msg);
  }
}

void reject_unknown(const std::filesystem::path& file, const std::vector<SettingEntry>& settings) {
  for (const auto& s : settings) {
    if (!is_scene_key(s.key) && !is_train_key(s.key)) {
      throw ConfigError(file.string() + ":" + std::to_string(s.line) + ": unknown setting '" + s.key + "'");
    }
  }
}

struct Common {
  std::string config;
  std::string out = "tkp_out";
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  std::vector<SettingEntry> settings() const {
    if (config.empty()) return {};
    auto s = read_settings(config);
    reject_unknown(config, s);
    return s;
  }
};

int run_synth(const Common& c) {
  SyntheticSceneSpec spec = SyntheticSceneSpec::standard();
  const auto settings = c.settings();
  with_line_context(c.config, settings, [&] { apply_scene_entries(spec, as_entries(settings)); });
  if (c.seed) spec.seed = *c.seed;
  const auto data = generate_synthetic(spec);
  const auto manifest = write_dataset(data, c.out);
  std::ofstream os(std::filesystem::path(c.out) / "scene.txt", std::ios::trunc);
  for (const auto& [k, v] : scene_spec_entries(spec)) os << k << " = " << v << '\n';
  os << "# dynamic pixel ratio " << format_number(data.dynamic_ratio) << '\n';
  spdlog::info("wrote {} frames to {} (dynamic pixel ratio {:.4f})", data.images.size(), manifest.string(),
               data.dynamic_ratio);
  return 0;
}

int run_train(const Common& c, const std::string& data_path) {
  TrainConfig config;
  const auto settings = c.settings();
  with_line_context(c.config, settings, [&] {
    apply_train_entries(config, as_entries(settings));
    config.validate();
  });
  if (c.seed) config.seed = *c.seed;
  const auto manifest = data_path.empty() ? std::filesystem::path(c.out) / "manifest.txt" : std::filesystem::path(data_path);
  const Dataset data = load_dataset(manifest);
  const auto result = train(data, config, c.out);
  spdlog::info("trained {} iterations, final loss {:.6f}, checkpoint {}", result.checkpoint.iteration,
               result.checkpoint.last_loss, (std::filesystem::path(c.out) / "checkpoint.tkp").string());
  return 0;
}

std::filesystem::path checkpoint_path(const Common& c, const std::string& given) {
  return given.empty() ? std::filesystem::path(c.out) / "checkpoint.tkp" : std::filesystem::path(given);
}

int run_render(const Common& c, const std::string& checkpoint, const std::string& poses_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(c, checkpoint));
  ManifestOptions opts;
  opts.require_images = false;
  opts.normalize_time = false;
  opts.allow_empty = true;
  const Manifest poses = load_manifest(poses_path, opts);
  const auto results = render_novel(ck, poses, std::filesystem::path(c.out) / "renders");
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.error.empty()) ++failed;
  }
  spdlog::info("rendered {} of {} poses", results.size() - failed, results.size());
  return failed == 0 ? 0 : 2;
}

int run_eval(const Common& c, const std::string& checkpoint, const std::string& data_path, const std::string& split,
             bool dump) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(c, checkpoint));
  const auto manifest = data_path.empty() ? std::filesystem::path(c.out) / "manifest.txt" : std::filesystem::path(data_path);
  const Dataset data = load_dataset(manifest);
  const std::filesystem::path out(c.out);
  std::filesystem::create_directories(out);
  const EvalReport report = evaluate(ck, data, parse_split(split), dump ? out / "eval_frames" : std::filesystem::path{});
  write_report_csv(out / "report.csv", report);
  const std::string summary = report_summary(report);
  std::ofstream(out / "summary.txt", std::ios::trunc) << summary;
  std::cout << summary;
  return report.failed == 0 ? 0 : 2;
}

}  // namespace

std::vector<SettingEntry> read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<SettingEntry> out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = path.string() + ":" + std::to_string(n) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + body + "'");
    SettingEntry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), n};
    if (e.key.empty() || e.value.empty()) throw ConfigError(where + "empty key or value");
    if (auto it = seen.find(e.key); it != seen.end()) {
      throw ConfigError(where + "'" + e.key + "' already set on line " + std::to_string(it->second));
    }
    seen[e.key] = n;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<NovelRender> render_novel(const Checkpoint& checkpoint, const Manifest& poses,
                                      const std::filesystem::path& out_dir) {
  std::vector<NovelRender> out;
  for (const auto& f : poses.frames) {
    NovelRender r;
    try {
      const double t = f.timestamp();
      if (!(t >= 0.0 && t <= 1.0)) throw ContractError("timestamp " + format_number(t) + " outside [0, 1]");
      const Image img =
          tensor_to_image(checkpoint.model.render(f.camera, checkpoint.bounds, checkpoint.config.samples_per_ray));
      const auto path = out_dir / f.image_path;
      std::filesystem::create_directories(path.parent_path());
      write_png(path, img);
      r.output = path;
    } catch (const std::exception& e) {
      r.error = e.what();
      spdlog::error("pose '{}': {}", f.image_path, e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Tiered factored-plane radiance fields for dynamic scenes"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Flat key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--out", common.out, "Output directory (created if missing)")->capture_default_str();
  app.add_option("--seed", common.seed, "Override the seed");
  app.add_flag("-v,--verbose", common.verbose, "Debug logging");

  std::string data_path, checkpoint, poses, split = "val";
  bool dump = false;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset into --out");
  auto* train_cmd = app.add_subcommand("train", "Train on a manifest, writing checkpoints and loss_log.csv");
  train_cmd->add_option("--data", data_path, "Manifest (default <out>/manifest.txt)");
  auto* render = app.add_subcommand("render", "Render the poses of a manifest into <out>/renders");
  render->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.tkp)");
  render->add_option("--poses", poses, "Manifest of poses and timestamps")->required()->check(CLI::ExistingFile);
  auto* eval = app.add_subcommand("eval", "Score a split, writing report.csv and summary.txt");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.tkp)");
  eval->add_option("--data", data_path, "Manifest (default <out>/manifest.txt)");
  eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}))->capture_default_str();
  eval->add_flag("--dump", dump, "Also write rendered frames to <out>/eval_frames");
  for (auto* sub : {synth, train_cmd, render, eval}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);
  try {
    std::filesystem::create_directories(common.out);
    if (synth->parsed()) return run_synth(common);
    if (train_cmd->parsed()) return run_train(common, data_path);
    if (render->parsed()) return run_render(common, checkpoint, poses);
    return run_eval(common, checkpoint, data_path, split, dump);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace tkp
