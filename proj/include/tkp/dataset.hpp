#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tkp/camera.hpp"
#include "tkp/image.hpp"

namespace tkp {

/// Axis-aligned pixel rectangle in continuous image coordinates.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool operator==(const Box&) const = default;
};

enum class Split { train, val };

const char* split_name(Split s);
Split parse_split(const std::string& s);

/// One posed, timestamped frame. The normalized timestamp lives in
/// camera.timestamp.
struct FrameRecord {
  std::string image_path;  // as written in the manifest, relative to it
  CameraPose camera;
  std::vector<Box> boxes;
  Split split = Split::train;

  double timestamp() const { return camera.timestamp; }
  bool operator==(const FrameRecord& other) const;
};

struct Manifest {
  std::optional<SceneBounds> bounds;
  std::vector<FrameRecord> frames;
  std::filesystem::path base_dir;  // directory image paths are relative to

  std::filesystem::path image_file(const FrameRecord& frame) const { return base_dir / frame.image_path; }
  std::vector<std::size_t> indices(Split split) const;
};

struct ManifestOptions {
  bool require_images = true;   // fail if an image file is missing
  bool normalize_time = true;   // min-max map raw timestamps onto [0,1]
  std::size_t val_every = 0;    // when no frame carries a split tag, every k-th frame goes to val
  bool allow_empty = false;     // accept a manifest without frame records
};

/// Text manifest, one sequence per file:
///
///   tkplanes-manifest 1
///   intrinsics <fx> <fy> <cx> <cy> <width> <height>
///   bounds <min x y z> <max x y z> <near> <far>            (optional)
///   frame <path> <16 pose values, row-major> <timestamp> <n_boxes> <n_boxes x (x0 y0 x1 y1)> [train|val]
///
/// Blank lines and lines starting with '#' are ignored. Frames come back
/// stably sorted by timestamp.
Manifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Dataset {
  Manifest manifest;
  std::vector<Image> images;  // parallel to manifest.frames
};

Dataset load_dataset(const std::filesystem::path& manifest_path, const ManifestOptions& options = {});

}  // namespace tkp
