#include "tkp/camera.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "tkp/errors.hpp"

namespace tkp {

void CameraPose::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) ||
      !std::isfinite(cy)) {
    throw ContractError("camera intrinsics are not invertible (fx=" + std::to_string(fx) +
                        ", fy=" + std::to_string(fy) + ")");
  }
  if (width == 0 || height == 0) throw ContractError("camera image size must be positive");
  if (!camera_to_world.allFinite()) throw ContractError("camera pose has non-finite entries");
  const Eigen::Matrix3d r = rotation();
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-5) {
    throw ContractError("camera rotation is not orthonormal (max |R^T R - I| = " + std::to_string(err) + ")");
  }
  if (r.determinant() < 0.0) throw ContractError("camera rotation has negative determinant");
}

Eigen::Vector3d CameraPose::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d cam = rotation().transpose() * (world - center());
  return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy, cam.z()};
}

Eigen::Matrix4d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = z.cross(up).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 1>(0, 0) = x;
  m.block<3, 1>(0, 1) = y;
  m.block<3, 1>(0, 2) = z;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

void SceneBounds::validate() const {
  if (!(min.array() < max.array()).all()) throw ContractError("scene bounds: min must be < max componentwise");
  if (!(near > 0.0) || !(near < far)) {
    throw ContractError("scene bounds: need 0 < near < far, got near=" + std::to_string(near) +
                        " far=" + std::to_string(far));
  }
}

RayBundle generate_rays(const CameraPose& camera, std::size_t map_w, std::size_t map_h) {
  camera.validate();
  if (map_w == 0 || map_h == 0 || camera.width % map_w != 0 || camera.height % map_h != 0) {
    throw ContractError("feature map " + std::to_string(map_w) + "x" + std::to_string(map_h) +
                        " does not evenly divide image " + std::to_string(camera.width) + "x" +
                        std::to_string(camera.height));
  }
  const double step_u = static_cast<double>(camera.width) / static_cast<double>(map_w);
  const double step_v = static_cast<double>(camera.height) / static_cast<double>(map_h);
  const Eigen::Matrix3d r = camera.rotation();
  const Eigen::Vector3d origin = camera.center();
  RayBundle bundle;
  bundle.width = map_w;
  bundle.height = map_h;
  bundle.rays.reserve(map_w * map_h);
  for (std::size_t i = 0; i < map_h; ++i) {
    for (std::size_t j = 0; j < map_w; ++j) {
      const double u = (static_cast<double>(j) + 0.5) * step_u;
      const double v = (static_cast<double>(i) + 0.5) * step_v;
      const Eigen::Vector3d dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      bundle.rays.push_back({origin, (r * dir_cam).normalized()});
    }
  }
  return bundle;
}

RaySamples sample_uniform(const SceneBounds& bounds, std::size_t count, std::mt19937_64* jitter) {
  if (!(bounds.near < bounds.far)) {
    throw ContractError("sample_uniform: near " + std::to_string(bounds.near) + " must be < far " +
                        std::to_string(bounds.far));
  }
  if (count == 0) throw ContractError("sample_uniform: need at least one sample");
  const double delta = (bounds.far - bounds.near) / static_cast<double>(count);
  // Keep jittered samples strictly inside their sub-interval.
  std::uniform_real_distribution<double> offset(1e-6, 1.0 - 1e-6);
  RaySamples s;
  s.near = bounds.near;
  s.far = bounds.far;
  s.t.resize(count);
  s.deltas.assign(count, delta);
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = jitter ? offset(*jitter) : 0.5;
    s.t[i] = bounds.near + (static_cast<double>(i) + frac) * delta;
  }
  return s;
}

SpacetimePoint normalize_to_scene(const Eigen::Vector3d& world, const SceneBounds& bounds, double t) {
  const Eigen::Vector3d n = ((world - bounds.min).array() / (bounds.max - bounds.min).array())
                                .cwiseMax(0.0)
                                .cwiseMin(1.0);
  return {n.x(), n.y(), n.z(), t};
}

std::vector<SpacetimePoint> normalize_to_scene(std::span<const Eigen::Vector3d> world,
                                               const SceneBounds& bounds, double t) {
  std::vector<SpacetimePoint> out;
  out.reserve(world.size());
  for (const auto& p : world) out.push_back(normalize_to_scene(p, bounds, t));
  return out;
}

TierSamples build_tier_samples(const CameraPose& camera, const SceneBounds& bounds, std::size_t map_w,
                               std::size_t map_h, std::size_t samples_per_ray, std::mt19937_64* jitter) {
  bounds.validate();
  const RayBundle bundle = generate_rays(camera, map_w, map_h);
  TierSamples out;
  out.map_w = map_w;
  out.map_h = map_h;
  out.samples_per_ray = samples_per_ray;
  out.points.reserve(bundle.rays.size() * samples_per_ray);
  out.deltas.reserve(bundle.rays.size() * samples_per_ray);
  for (const auto& ray : bundle.rays) {
    const RaySamples s = sample_uniform(bounds, samples_per_ray, jitter);
    for (std::size_t i = 0; i < samples_per_ray; ++i) {
      out.points.push_back(normalize_to_scene(ray.origin + s.t[i] * ray.direction, bounds, camera.timestamp));
      out.deltas.push_back(s.deltas[i]);
    }
  }
  return out;
}

SceneBounds bounds_from_frusta(std::span<const CameraPose> cameras, double slab_min_z, double slab_max_z) {
  if (cameras.empty()) throw ConfigError("bounds_from_frusta: no cameras");
  if (!(slab_min_z < slab_max_z)) throw ConfigError("bounds_from_frusta: empty slab");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  double near = std::numeric_limits<double>::infinity();
  double far = 0.0;
  for (const auto& cam : cameras) {
    cam.validate();
    const double w = static_cast<double>(cam.width), h = static_cast<double>(cam.height);
    const std::array<Eigen::Vector2d, 5> pixels = {Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0),
                                                   Eigen::Vector2d(0, h), Eigen::Vector2d(w, h),
                                                   Eigen::Vector2d(cam.cx, cam.cy)};
    for (const auto& px : pixels) {
      const Eigen::Vector3d d =
          (cam.rotation() * Eigen::Vector3d((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0))
              .normalized();
      const Eigen::Vector3d o = cam.center();
      for (const double z : {slab_min_z, slab_max_z}) {
        if (std::abs(d.z()) < 1e-12) throw ConfigError("bounds_from_frusta: corner ray parallel to the slab");
        const double t = (z - o.z()) / d.z();
        if (t <= 0.0) throw ConfigError("bounds_from_frusta: slab is not in front of every camera");
        const Eigen::Vector3d p = o + t * d;
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
        near = std::min(near, t);
        far = std::max(far, t);
      }
    }
  }
  SceneBounds b;
  b.min = Eigen::Vector3d(lo.x(), lo.y(), slab_min_z);
  b.max = Eigen::Vector3d(hi.x(), hi.y(), slab_max_z);
  b.near = 0.95 * near;
  b.far = 1.05 * far;
  return b;
}

}  // namespace tkp
