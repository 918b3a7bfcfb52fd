#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tkp/tensor.hpp"

namespace tkp {

/// One tier of feature grids and the matching feature-map stage.
struct TierSpec {
  std::size_t feature_dim = 16;          // D
  std::size_t spatial_resolution = 64;   // R
  std::size_t temporal_resolution = 30;  // R_t
  std::size_t downsample = 16;           // image size / feature-map size, per axis
  std::size_t output_width = 32;         // F, width of the rendered feature vector
};

struct TierConfig {
  std::vector<TierSpec> tiers;

  std::size_t size() const { return tiers.size(); }
  const TierSpec& operator[](std::size_t k) const { return tiers.at(k); }

  /// Throws ConfigError on zero sizes or a downsample ladder that does not
  /// halve from one tier to the next.
  void validate() const;

  /// Tier 0: R=64, factor 16, F=32; tier 1: R=128, factor 8, F=16.
  static TierConfig standard(std::size_t n_tiers, std::size_t temporal_resolution,
                             std::size_t feature_dim = 16);
};

/// Scene-normalized query point; every component lives in [0,1].
struct SpacetimePoint {
  double x = 0, y = 0, z = 0, t = 0;
};

enum class PlaneAxes { xy, xz, yz, xt, yt, zt };

const char* axes_name(PlaneAxes axes);

inline constexpr std::array<PlaneAxes, 3> kSpatialAxes = {PlaneAxes::xy, PlaneAxes::xz, PlaneAxes::yz};
inline constexpr std::array<PlaneAxes, 3> kTemporalAxes = {PlaneAxes::xt, PlaneAxes::yt, PlaneAxes::zt};

/// The nine learnable planes of one tier. Spatial planes are D x R x R,
/// spatio-temporal planes are D x R x R_t (space along the first axis).
template <typename T>
struct PlaneSet {
  std::array<BasicTensor<T>, 3> static_planes;     // xy, xz, yz
  std::array<BasicTensor<T>, 3> dynamic_spatial;   // xy, xz, yz
  std::array<BasicTensor<T>, 3> dynamic_temporal;  // xt, yt, zt

  std::size_t feature_dim() const { return static_planes[0].dim(0); }

  /// static, dynamic spatial, dynamic temporal; 9 tensors.
  std::vector<BasicTensor<T>> all() const;
  std::vector<BasicTensor<T>> dynamic_planes() const;
};

/// Per-axis-pair lookup coordinates for a batch of points, N x 2 each,
/// indexed by PlaneAxes.
template <typename T>
struct PlaneCoords {
  std::array<BasicTensor<T>, 6> by_axes;
  std::size_t count = 0;

  const BasicTensor<T>& operator[](PlaneAxes a) const { return by_axes[static_cast<std::size_t>(a)]; }
};

/// Clamps each component into [0,1] and builds the six coordinate tables.
template <typename T>
PlaneCoords<T> project_points(std::span<const SpacetimePoint> points);

/// Hadamard product of the three static spatial samples; N x D.
template <typename T>
BasicTensor<T> sample_static(const PlaneSet<T>& tier, const PlaneCoords<T>& coords);

/// Hadamard product of the three dynamic spatial and three spatio-temporal
/// samples; N x D.
template <typename T>
BasicTensor<T> sample_dynamic(const PlaneSet<T>& tier, const PlaneCoords<T>& coords);

template <typename T>
BasicTensor<T> sample_static(const PlaneSet<T>& tier, std::span<const SpacetimePoint> points) {
  return sample_static(tier, project_points<T>(points));
}

template <typename T>
BasicTensor<T> sample_dynamic(const PlaneSet<T>& tier, std::span<const SpacetimePoint> points) {
  return sample_dynamic(tier, project_points<T>(points));
}

/// Stacks static over dynamic rows: [N x D; N x D] -> 2N x D.
template <typename T>
BasicTensor<T> combine(const BasicTensor<T>& f_static, const BasicTensor<T>& f_dynamic);

/// Static and dynamic spatial planes ~ U[0.9, 1.1]; spatio-temporal planes
/// 1 + U[-0.01, 0.01]. Deterministic per seed.
template <typename T>
std::vector<PlaneSet<T>> init_planes(const TierConfig& config, std::uint64_t seed);

/// Checkpoint key, e.g. "tier0/dyn_temporal/xt".
std::string plane_key(std::size_t tier, const char* group, PlaneAxes axes);

}  // namespace tkp
