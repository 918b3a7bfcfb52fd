#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tkp/dataset.hpp"
#include "tkp/train.hpp"

namespace tkp {

struct FrameEvaluation {
  std::size_t frame_index = 0;  // into the manifest
  std::string image_path;
  double timestamp = 0;
  std::optional<double> psnr;
  std::optional<double> dpsnr;  // absent without boxes
  double render_ms = 0;
  std::size_t ray_count = 0;
  std::string error;  // non-empty when the frame could not be evaluated
};

struct EvalReport {
  Split split = Split::val;
  std::vector<FrameEvaluation> frames;  // manifest order
  std::optional<double> mean_psnr;
  std::optional<double> mean_dpsnr;  // over frames that have a DPSNR
  std::size_t failed = 0;
};

/// Renders every frame of `split` at its pose and timestamp (no depth
/// jitter) and scores it. Frames that cannot be rendered get an error entry.
/// With a non-empty `dump_dir` the renders are also written as PNGs.
EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, Split split,
                    const std::filesystem::path& dump_dir = {});

/// Columns: frame,image,timestamp,psnr,dpsnr,render_ms,rays,error.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
std::string report_summary(const EvalReport& report);

}  // namespace tkp
