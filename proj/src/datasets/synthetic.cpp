#include "tkp/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "tkp/errors.hpp"
#include "tkp/parallel.hpp"
#include "tkp/text_format.hpp"

namespace tkp {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const Eigen::Vector3d kSkyColor(0.62, 0.72, 0.88);

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Eigen::Vector3d rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Eigen::Vector3d::Constant(v - c);
}

struct Wave {
  Eigen::Vector2d direction;
  double frequency;
  double phase;
  Eigen::Vector3d amplitude;
};

// Smooth ground pattern: a base color plus a few plane waves per octave.
struct GroundTexture {
  Eigen::Vector3d base{0.42, 0.47, 0.32};
  std::vector<Wave> waves;

  GroundTexture(const SyntheticSceneSpec& spec) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double freq = spec.texture_frequency;
    double amp = 0.14;
    for (std::size_t o = 0; o < spec.texture_octaves; ++o) {
      for (int k = 0; k < 2; ++k) {
        const double angle = kTwoPi * unit(rng);
        Wave w;
        w.direction = {std::cos(angle), std::sin(angle)};
        w.frequency = freq * (0.8 + 0.4 * unit(rng));
        w.phase = kTwoPi * unit(rng);
        w.amplitude = amp * Eigen::Vector3d(0.5 + unit(rng), 0.5 + unit(rng), 0.5 + unit(rng)) / 1.5;
        waves.push_back(w);
      }
      freq *= 2.0;
      amp *= 0.5;
    }
  }

  Eigen::Vector3d at(double x, double y) const {
    Eigen::Vector3d c = base;
    for (const auto& w : waves) {
      c += w.amplitude * std::sin(kTwoPi * w.frequency * (w.direction.x() * x + w.direction.y() * y) + w.phase);
    }
    return c.cwiseMax(0.0).cwiseMin(1.0);
  }
};

struct SpriteHit {
  double distance = std::numeric_limits<double>::infinity();
  int axis = -1;  // 0, 1, 2 = face normal axis
};

SpriteHit intersect_cube(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3d& origin,
                         const Eigen::Vector3d& dir) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return {};
      continue;
    }
    double t0 = (lo[a] - origin[a]) / dir[a];
    double t1 = (hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis = a;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return {};
  }
  if (t_near <= 0) return {};
  return {t_near, axis};
}

std::array<Eigen::Vector3d, 2> cube_extent(const SpriteSpec& s, double t) {
  const Eigen::Vector2d p = s.position(t);
  const double h = 0.5 * s.size;
  return {Eigen::Vector3d(p.x() - h, p.y() - h, 0.0), Eigen::Vector3d(p.x() + h, p.y() + h, s.size)};
}

}  // namespace

Eigen::Vector2d SpriteSpec::position(double t) const {
  if (trajectory == TrajectoryKind::linear) return start + t * (end - start);
  const double a = phase + kTwoPi * t / period;
  return center + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
}

Eigen::Vector3d SpriteSpec::color() const {
  std::mt19937_64 rng(color_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return hsv_to_rgb(unit(rng), 0.8, 0.95);
}

SyntheticSceneSpec SyntheticSceneSpec::standard() {
  SyntheticSceneSpec spec;
  SpriteSpec walker;
  walker.color_seed = 3;
  walker.trajectory = TrajectoryKind::linear;
  walker.start = {-0.9, -0.5};
  walker.end = {0.9, 0.3};
  SpriteSpec circler;
  circler.color_seed = 11;
  circler.trajectory = TrajectoryKind::circular;
  circler.center = {0.1, 0.4};
  circler.radius = 0.55;
  circler.phase = 0.5;
  spec.sprites = {walker, circler};
  return spec;
}

void SyntheticSceneSpec::validate() const {
  if (width == 0 || height == 0) throw ConfigError("synthetic scene: image size must be positive");
  if (frame_count < 2) throw ConfigError("synthetic scene: frame_count must be at least 2");
  if (supersample == 0) throw ConfigError("synthetic scene: supersample must be at least 1");
  if (!(fov_y_deg > 0 && fov_y_deg < 180)) throw ConfigError("synthetic scene: fov_y_deg must lie in (0, 180)");
  if (!(altitude > 0)) throw ConfigError("synthetic scene: altitude must be positive");
  if (!(tilt_deg >= 0 && tilt_deg < 60)) throw ConfigError("synthetic scene: tilt_deg must lie in [0, 60)");
  if (!(ground_half_extent > 0)) throw ConfigError("synthetic scene: ground_half_extent must be positive");
  for (std::size_t i = 0; i < sprites.size(); ++i) {
    const auto& s = sprites[i];
    const std::string who = "synthetic scene: sprite " + std::to_string(i);
    if (!(s.size > 0)) throw ConfigError(who + " needs a positive size");
    double reach = 0;
    if (s.trajectory == TrajectoryKind::linear) {
      reach = std::max(s.start.cwiseAbs().maxCoeff(), s.end.cwiseAbs().maxCoeff());
    } else {
      if (!(s.period > 0)) throw ConfigError(who + " needs a positive period");
      reach = s.center.cwiseAbs().maxCoeff() + s.radius;
    }
    if (reach + 0.5 * s.size > ground_half_extent) {
      throw ConfigError(who + " leaves the scene bounds (reaches " + std::to_string(reach + 0.5 * s.size) +
                        ", extent " + std::to_string(ground_half_extent) + ")");
    }
  }
}

double SyntheticSceneSpec::frame_time(std::size_t k) const {
  return static_cast<double>(k) / static_cast<double>(frame_count - 1);
}

CameraPose SyntheticSceneSpec::camera(double t) const {
  CameraPose cam;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * static_cast<double>(height) / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * static_cast<double>(width);
  cam.cy = 0.5 * static_cast<double>(height);
  cam.timestamp = t;
  if (camera_path == CameraPathKind::orbit) {
    const double a = kTwoPi * t;
    const Eigen::Vector3d eye(orbit_radius * std::cos(a), orbit_radius * std::sin(a), altitude);
    cam.camera_to_world = look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ());
    return cam;
  }
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> unit(0.0, kTwoPi);
  std::array<double, 4> phases{};
  for (auto& p : phases) p = unit(rng);
  const double a = jitter_amplitude;
  const double tilt = tilt_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d eye(a * std::sin(kTwoPi * t + phases[0]), -altitude * std::tan(tilt) + a * std::sin(kTwoPi * 1.3 * t + phases[1]),
                            altitude);
  const Eigen::Vector3d target(0.5 * a * std::sin(kTwoPi * 0.7 * t + phases[2]),
                               0.5 * a * std::sin(kTwoPi * 1.1 * t + phases[3]), 0.0);
  cam.camera_to_world = look_at(eye, target, Eigen::Vector3d::UnitY());
  return cam;
}

double SyntheticSceneSpec::max_height() const {
  double h = 0;
  for (const auto& s : sprites) h = std::max(h, s.size);
  return h;
}

std::optional<Box> sprite_box(const SpriteSpec& sprite, const CameraPose& camera, double t) {
  const auto [lo, hi] = cube_extent(sprite, t);
  double u_min = std::numeric_limits<double>::infinity(), v_min = u_min;
  double u_max = -u_min, v_max = -u_min;
  for (int c = 0; c < 8; ++c) {
    const Eigen::Vector3d corner((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z());
    const Eigen::Vector3d p = camera.project(corner);
    if (p.z() <= 0) return std::nullopt;
    u_min = std::min(u_min, p.x());
    u_max = std::max(u_max, p.x());
    v_min = std::min(v_min, p.y());
    v_max = std::max(v_max, p.y());
  }
  const double w = static_cast<double>(camera.width), h = static_cast<double>(camera.height);
  Box box{std::clamp(u_min, 0.0, w), std::clamp(v_min, 0.0, h), std::clamp(u_max, 0.0, w), std::clamp(v_max, 0.0, h)};
  if (box.width() <= 0 || box.height() <= 0) return std::nullopt;
  return box;
}

RasterResult rasterize(const SyntheticSceneSpec& spec, const CameraPose& camera, double t, bool with_sprites) {
  const GroundTexture ground(spec);
  std::vector<std::array<Eigen::Vector3d, 2>> cubes;
  std::vector<Eigen::Vector3d> colors;
  if (with_sprites) {
    for (const auto& s : spec.sprites) {
      cubes.push_back(cube_extent(s, t));
      colors.push_back(s.color());
    }
  }
  const Eigen::Matrix3d rot = camera.rotation();
  const Eigen::Vector3d origin = camera.center();
  const std::size_t ss = spec.supersample;
  const double inv_samples = 1.0 / static_cast<double>(ss * ss);

  RasterResult out;
  out.image = Image(camera.width, camera.height);
  std::vector<std::size_t> row_hits(camera.height, 0);
  parallel_for(camera.height, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < camera.width; ++j) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        for (std::size_t a = 0; a < ss; ++a) {
          for (std::size_t b = 0; b < ss; ++b) {
            const double u = static_cast<double>(j) + (static_cast<double>(b) + 0.5) / static_cast<double>(ss);
            const double v = static_cast<double>(i) + (static_cast<double>(a) + 0.5) / static_cast<double>(ss);
            const Eigen::Vector3d dir =
                (rot * Eigen::Vector3d((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0)).normalized();
            double t_ground = std::numeric_limits<double>::infinity();
            if (dir.z() < -1e-12) t_ground = -origin.z() / dir.z();
            SpriteHit best;
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < cubes.size(); ++k) {
              const SpriteHit hit = intersect_cube(cubes[k][0], cubes[k][1], origin, dir);
              if (hit.distance < best.distance) {
                best = hit;
                best_k = k;
              }
            }
            if (best.distance < t_ground) {
              static constexpr std::array<double, 3> kShade = {0.75, 0.6, 1.0};
              acc += kShade[static_cast<std::size_t>(best.axis)] * colors[best_k];
              ++row_hits[i];
            } else if (std::isfinite(t_ground)) {
              const Eigen::Vector3d p = origin + t_ground * dir;
              acc += ground.at(p.x(), p.y());
            } else {
              acc += kSkyColor;
            }
          }
        }
        for (std::size_t c = 0; c < 3; ++c) out.image.at(c, i, j) = static_cast<float>(acc[c] * inv_samples);
      }
    }
  });
  std::size_t hits = 0;
  for (auto h : row_hits) hits += h;
  out.dynamic_fraction = static_cast<double>(hits) / static_cast<double>(camera.width * camera.height * ss * ss);
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  struct Slot {
    double t;
    Split split;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < spec.frame_count; ++k) slots.push_back({spec.frame_time(k), Split::train, k});
  // val frames sit halfway between evenly spread pairs of neighbouring training frames
  for (std::size_t v = 0; v < spec.val_frames; ++v) {
    const std::size_t gaps = spec.frame_count - 1;
    const std::size_t k = std::min(gaps - 1, (2 * v + 1) * gaps / (2 * spec.val_frames));
    slots.push_back({0.5 * (spec.frame_time(k) + spec.frame_time(k + 1)), Split::val, v});
  }
  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.t < b.t; });

  SyntheticDataset data;
  std::vector<CameraPose> cameras;
  double ratio_sum = 0;
  for (const auto& slot : slots) {
    FrameRecord rec;
    char name[64];
    std::snprintf(name, sizeof(name), "frames/%s_%03zu.png", slot.split == Split::train ? "frame" : "val", slot.index);
    rec.image_path = name;
    rec.camera = spec.camera(slot.t);
    rec.split = slot.split;
    for (const auto& s : spec.sprites) {
      if (auto box = sprite_box(s, rec.camera, slot.t)) rec.boxes.push_back(*box);
    }
    RasterResult raster = rasterize(spec, rec.camera, slot.t, true);
    ratio_sum += raster.dynamic_fraction;
    data.images.push_back(quantize_8bit(raster.image));
    cameras.push_back(rec.camera);
    data.manifest.frames.push_back(std::move(rec));
  }
  data.dynamic_ratio = ratio_sum / static_cast<double>(slots.size());
  data.manifest.bounds = bounds_from_frusta(cameras, 0.0, 1.25 * spec.max_height() + 1e-3);
  return data;
}

std::filesystem::path write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  for (std::size_t i = 0; i < data.images.size(); ++i) write_png(dir / data.manifest.frames[i].image_path, data.images[i]);
  const auto path = dir / "manifest.txt";
  write_manifest(path, data.manifest);
  return path;
}

namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

const std::vector<std::string>& scene_scalar_keys() {
  static const std::vector<std::string> keys = {
      "width",          "height",      "frame_count", "val_frames",      "seed",          "ground_half_extent",
      "texture_frequency", "texture_octaves", "camera_path", "altitude", "fov_y_deg",     "tilt_deg",
      "jitter_amplitude", "orbit_radius", "supersample", "sprite_count"};
  return keys;
}

const std::vector<std::string>& sprite_fields() {
  static const std::vector<std::string> fields = {"size",     "color_seed", "trajectory", "start_x",
                                                  "start_y",  "end_x",      "end_y",      "center_x",
                                                  "center_y", "radius",     "period",     "phase"};
  return fields;
}

std::optional<std::pair<std::size_t, std::string>> split_sprite_key(const std::string& key) {
  constexpr std::size_t kPrefix = 6;  // "sprite"
  if (key.rfind("sprite", 0) != 0) return std::nullopt;
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == kPrefix) return std::nullopt;
  std::size_t k = 0;
  const auto res = std::from_chars(key.data() + kPrefix, key.data() + dot, k);
  if (res.ec != std::errc() || res.ptr != key.data() + dot) return std::nullopt;
  const std::string field = key.substr(dot + 1);
  if (std::find(sprite_fields().begin(), sprite_fields().end(), field) == sprite_fields().end()) return std::nullopt;
  return std::make_pair(k, field);
}

void set_sprite_field(SpriteSpec& s, const std::string& key, const std::string& field, const std::string& value) {
  if (field == "size") s.size = parse_number(key, value);
  else if (field == "color_seed") s.color_seed = parse_count(key, value);
  else if (field == "trajectory") {
    if (value == "linear") s.trajectory = TrajectoryKind::linear;
    else if (value == "circular") s.trajectory = TrajectoryKind::circular;
    else throw ConfigError(key + ": expected linear or circular, got '" + value + "'");
  } else if (field == "start_x") s.start.x() = parse_number(key, value);
  else if (field == "start_y") s.start.y() = parse_number(key, value);
  else if (field == "end_x") s.end.x() = parse_number(key, value);
  else if (field == "end_y") s.end.y() = parse_number(key, value);
  else if (field == "center_x") s.center.x() = parse_number(key, value);
  else if (field == "center_y") s.center.y() = parse_number(key, value);
  else if (field == "radius") s.radius = parse_number(key, value);
  else if (field == "period") s.period = parse_number(key, value);
  else if (field == "phase") s.phase = parse_number(key, value);
}

void set_scene_field(SyntheticSceneSpec& spec, const std::string& key, const std::string& value) {
  if (key == "width") spec.width = parse_count(key, value);
  else if (key == "height") spec.height = parse_count(key, value);
  else if (key == "frame_count") spec.frame_count = parse_count(key, value);
  else if (key == "val_frames") spec.val_frames = parse_count(key, value);
  else if (key == "seed") spec.seed = parse_count(key, value);
  else if (key == "ground_half_extent") spec.ground_half_extent = parse_number(key, value);
  else if (key == "texture_frequency") spec.texture_frequency = parse_number(key, value);
  else if (key == "texture_octaves") spec.texture_octaves = parse_count(key, value);
  else if (key == "camera_path") {
    if (value == "hover") spec.camera_path = CameraPathKind::hover;
    else if (value == "orbit") spec.camera_path = CameraPathKind::orbit;
    else throw ConfigError(key + ": expected hover or orbit, got '" + value + "'");
  } else if (key == "altitude") spec.altitude = parse_number(key, value);
  else if (key == "fov_y_deg") spec.fov_y_deg = parse_number(key, value);
  else if (key == "tilt_deg") spec.tilt_deg = parse_number(key, value);
  else if (key == "jitter_amplitude") spec.jitter_amplitude = parse_number(key, value);
  else if (key == "orbit_radius") spec.orbit_radius = parse_number(key, value);
  else if (key == "supersample") spec.supersample = parse_count(key, value);
}

}  // namespace

bool is_scene_key(const std::string& key) {
  return std::find(scene_scalar_keys().begin(), scene_scalar_keys().end(), key) != scene_scalar_keys().end() ||
         split_sprite_key(key).has_value();
}

Entries scene_spec_entries(const SyntheticSceneSpec& spec) {
  Entries out = {
      {"width", std::to_string(spec.width)},
      {"height", std::to_string(spec.height)},
      {"frame_count", std::to_string(spec.frame_count)},
      {"val_frames", std::to_string(spec.val_frames)},
      {"seed", std::to_string(spec.seed)},
      {"ground_half_extent", format_number(spec.ground_half_extent)},
      {"texture_frequency", format_number(spec.texture_frequency)},
      {"texture_octaves", std::to_string(spec.texture_octaves)},
      {"camera_path", spec.camera_path == CameraPathKind::hover ? "hover" : "orbit"},
      {"altitude", format_number(spec.altitude)},
      {"fov_y_deg", format_number(spec.fov_y_deg)},
      {"tilt_deg", format_number(spec.tilt_deg)},
      {"jitter_amplitude", format_number(spec.jitter_amplitude)},
      {"orbit_radius", format_number(spec.orbit_radius)},
      {"supersample", std::to_string(spec.supersample)},
      {"sprite_count", std::to_string(spec.sprites.size())},
  };
  for (std::size_t k = 0; k < spec.sprites.size(); ++k) {
    const auto& s = spec.sprites[k];
    const std::string p = "sprite" + std::to_string(k) + ".";
    out.emplace_back(p + "size", format_number(s.size));
    out.emplace_back(p + "color_seed", std::to_string(s.color_seed));
    out.emplace_back(p + "trajectory", s.trajectory == TrajectoryKind::linear ? "linear" : "circular");
    out.emplace_back(p + "start_x", format_number(s.start.x()));
    out.emplace_back(p + "start_y", format_number(s.start.y()));
    out.emplace_back(p + "end_x", format_number(s.end.x()));
    out.emplace_back(p + "end_y", format_number(s.end.y()));
    out.emplace_back(p + "center_x", format_number(s.center.x()));
    out.emplace_back(p + "center_y", format_number(s.center.y()));
    out.emplace_back(p + "radius", format_number(s.radius));
    out.emplace_back(p + "period", format_number(s.period));
    out.emplace_back(p + "phase", format_number(s.phase));
  }
  return out;
}

Entries apply_scene_entries(SyntheticSceneSpec& spec, const Entries& entries) {
  for (const auto& [key, value] : entries) {
    if (key == "sprite_count") spec.sprites.resize(parse_count(key, value));
  }
  Entries rest;
  for (const auto& [key, value] : entries) {
    if (key == "sprite_count") continue;
    if (auto sk = split_sprite_key(key)) {
      if (sk->first >= spec.sprites.size()) {
        throw ConfigError(key + ": only " + std::to_string(spec.sprites.size()) + " sprites are configured");
      }
      set_sprite_field(spec.sprites[sk->first], key, sk->second, value);
    } else if (is_scene_key(key)) {
      set_scene_field(spec, key, value);
    } else {
      rest.emplace_back(key, value);
    }
  }
  return rest;
}

}  // namespace tkp
