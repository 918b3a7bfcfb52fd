#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tkp/camera.hpp"
#include "tkp/dataset.hpp"
#include "tkp/image.hpp"

namespace tkp {

enum class TrajectoryKind { linear, circular };

/// Axis-aligned cube of side `size` resting on the ground plane; its
/// footprint center follows the trajectory over t in [0,1].
struct SpriteSpec {
  double size = 0.35;
  std::uint64_t color_seed = 1;
  TrajectoryKind trajectory = TrajectoryKind::linear;
  Eigen::Vector2d start{-0.8, -0.4};  // linear
  Eigen::Vector2d end{0.8, 0.4};      // linear
  Eigen::Vector2d center{0, 0};       // circular
  double radius = 0.6;                // circular
  double period = 1.0;                // circular, in units of the t range
  double phase = 0.0;                 // circular, radians

  Eigen::Vector2d position(double t) const;
  Eigen::Vector3d color() const;
};

enum class CameraPathKind { hover, orbit };

struct SyntheticSceneSpec {
  std::size_t width = 64, height = 64;
  std::size_t frame_count = 30;  // training frames at t = k / (frame_count - 1)
  std::size_t val_frames = 5;    // extra frames at midpoints between training frames, tagged val
  std::uint64_t seed = 42;

  double ground_half_extent = 2.0;  // ground texture and sprite footprints live in [-e, e]^2
  double texture_frequency = 1.5;   // base spatial frequency of the ground pattern, cycles per unit
  std::size_t texture_octaves = 3;

  CameraPathKind camera_path = CameraPathKind::hover;
  double altitude = 3.0;
  double fov_y_deg = 50.0;
  double tilt_deg = 20.0;         // hover: pitch away from nadir
  double jitter_amplitude = 0.02; // hover: smooth drift of eye and target, world units
  double orbit_radius = 1.5;

  std::size_t supersample = 3;  // per-axis subsamples per pixel
  std::vector<SpriteSpec> sprites;

  /// Two sprites, one on a linear and one on a circular path.
  static SyntheticSceneSpec standard();

  /// Throws ConfigError on bad sizes or a sprite footprint leaving the ground extent.
  void validate() const;

  double frame_time(std::size_t k) const;
  CameraPose camera(double t) const;

  /// Highest point any sprite reaches.
  double max_height() const;
};

/// Exact image-space extent of a sprite: the bounding rectangle of its eight
/// projected corners, clipped to the image. Empty if fully off screen or
/// behind the camera.
std::optional<Box> sprite_box(const SpriteSpec& sprite, const CameraPose& camera, double t);

struct RasterResult {
  Image image;
  double dynamic_fraction = 0;  // share of subsamples that hit a sprite
};

/// Ray-cast rasterizer with `supersample`^2 box-filtered samples per pixel.
RasterResult rasterize(const SyntheticSceneSpec& spec, const CameraPose& camera, double t, bool with_sprites = true);

struct SyntheticDataset {
  Manifest manifest;          // image paths relative to the output directory
  std::vector<Image> images;  // parallel to manifest.frames
  double dynamic_ratio = 0;   // mean over frames of dynamic_fraction
};

SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec);

/// Flat key/value view of a scene spec. Sprites appear as sprite_count and
/// sprite<k>.<field>; setting sprite_count keeps existing sprites and pads
/// with defaults. Unknown keys are returned untouched; bad values throw
/// ConfigError.
std::vector<std::pair<std::string, std::string>> scene_spec_entries(const SyntheticSceneSpec& spec);
std::vector<std::pair<std::string, std::string>> apply_scene_entries(
    SyntheticSceneSpec& spec, const std::vector<std::pair<std::string, std::string>>& entries);
bool is_scene_key(const std::string& key);

/// Writes frames/<name>.png and manifest.txt under `dir` (created if missing).
/// Returns the manifest path.
std::filesystem::path write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace tkp
