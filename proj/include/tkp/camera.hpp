#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tkp/planes.hpp"

namespace tkp {

/// Pinhole camera in the OpenCV convention (x right, y down, z forward).
/// Pixel (i, j) covers [j, j+1) x [i, i+1) in continuous image coordinates,
/// so its center is (j + 0.5, i + 0.5).
struct CameraPose {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Eigen::Matrix4d camera_to_world = Eigen::Matrix4d::Identity();
  std::size_t width = 1, height = 1;
  double timestamp = 0;

  /// Throws ContractError unless fx, fy > 0 and the rotation is
  /// orthonormal within 1e-5.
  void validate() const;

  Eigen::Matrix3d rotation() const { return camera_to_world.topLeftCorner<3, 3>(); }
  Eigen::Vector3d center() const { return camera_to_world.topRightCorner<3, 1>(); }

  /// World point -> continuous pixel coordinates (u, v) and camera depth.
  Eigen::Vector3d project(const Eigen::Vector3d& world) const;
};

/// Camera at `eye` looking at `target`; `up` fixes the roll (image y runs
/// against it).
Eigen::Matrix4d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up);

struct SceneBounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
  double near = 0.1;
  double far = 1.0;

  void validate() const;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit length
};

/// One ray per feature-map pixel, row-major.
struct RayBundle {
  std::size_t width = 0, height = 0;
  std::vector<Ray> rays;
};

RayBundle generate_rays(const CameraPose& camera, std::size_t map_w, std::size_t map_h);

/// Sample depths along one ray. Without jitter, t_i are the midpoints of S
/// equal sub-intervals of [near, far]; with jitter each t_i is drawn inside
/// its own sub-interval. delta_i is always the sub-interval length.
struct RaySamples {
  std::vector<double> t;
  std::vector<double> deltas;
  double near = 0, far = 0;
};

RaySamples sample_uniform(const SceneBounds& bounds, std::size_t count, std::mt19937_64* jitter = nullptr);

/// Affine map of the bounding box onto [0,1]^3 (clamped), with time passed
/// through.
SpacetimePoint normalize_to_scene(const Eigen::Vector3d& world, const SceneBounds& bounds, double t);
std::vector<SpacetimePoint> normalize_to_scene(std::span<const Eigen::Vector3d> world,
                                               const SceneBounds& bounds, double t);

/// All sample points of a tier's rays, ray-major, ready for plane lookup.
struct TierSamples {
  std::size_t map_w = 0, map_h = 0, samples_per_ray = 0;
  std::vector<SpacetimePoint> points;
  std::vector<double> deltas;

  std::size_t ray_count() const { return map_w * map_h; }
};

TierSamples build_tier_samples(const CameraPose& camera, const SceneBounds& bounds, std::size_t map_w,
                               std::size_t map_h, std::size_t samples_per_ray,
                               std::mt19937_64* jitter = nullptr);

/// Scene box from the footprints of the cameras' corner rays on a
/// horizontal slab [slab_min_z, slab_max_z]; near/far bracket the slab
/// along every corner ray.
SceneBounds bounds_from_frusta(std::span<const CameraPose> cameras, double slab_min_z, double slab_max_z);

}  // namespace tkp
