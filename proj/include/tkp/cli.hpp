#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tkp/dataset.hpp"
#include "tkp/train.hpp"

namespace tkp {

/// One `key = value` line of a config file.
struct SettingEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat config file: `key = value` per line, '#' starts a comment. Throws
/// ConfigError with file and line on malformed lines or repeated keys.
std::vector<SettingEntry> read_settings(const std::filesystem::path& path);

struct NovelRender {
  std::filesystem::path output;  // empty on failure
  std::string error;
};

/// Renders one image per pose of `poses` (frame paths name the outputs,
/// relative to `out_dir`). A timestamp outside [0,1] or a resolution the
/// model cannot produce fails that item only.
std::vector<NovelRender> render_novel(const Checkpoint& checkpoint, const Manifest& poses,
                                      const std::filesystem::path& out_dir);

/// Entry point behind the tkplanes executable; returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace tkp
