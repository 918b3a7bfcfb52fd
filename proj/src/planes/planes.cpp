#include "tkp/planes.hpp"

#include <algorithm>
#include <random>

#include "tkp/errors.hpp"
#include "tkp/ops.hpp"

namespace tkp {

void TierConfig::validate() const {
  if (tiers.empty()) throw ConfigError("tier config: at least one tier is required");
  for (std::size_t k = 0; k < tiers.size(); ++k) {
    const auto& t = tiers[k];
    const std::string where = "tier " + std::to_string(k) + ": ";
    if (t.feature_dim == 0) throw ConfigError(where + "feature_dim must be positive");
    if (t.spatial_resolution == 0) throw ConfigError(where + "spatial_resolution must be positive");
    if (t.temporal_resolution == 0) throw ConfigError(where + "temporal_resolution must be positive");
    if (t.downsample == 0) throw ConfigError(where + "downsample must be positive");
    if (t.output_width == 0) throw ConfigError(where + "output_width must be positive");
    if (k > 0 && tiers[k - 1].downsample != 2 * t.downsample) {
      throw ConfigError(where + "downsample " + std::to_string(t.downsample) +
                        " must be half of the previous tier's " + std::to_string(tiers[k - 1].downsample));
    }
  }
}

TierConfig TierConfig::standard(std::size_t n_tiers, std::size_t temporal_resolution,
                                std::size_t feature_dim) {
  TierConfig c;
  std::size_t resolution = 64, downsample = 16, width = 32;
  for (std::size_t k = 0; k < n_tiers; ++k) {
    c.tiers.push_back({feature_dim, resolution, temporal_resolution, downsample, width});
    resolution *= 2;
    downsample = std::max<std::size_t>(1, downsample / 2);
    width = std::max<std::size_t>(1, width / 2);
  }
  return c;
}

const char* axes_name(PlaneAxes axes) {
  switch (axes) {
    case PlaneAxes::xy: return "xy";
    case PlaneAxes::xz: return "xz";
    case PlaneAxes::yz: return "yz";
    case PlaneAxes::xt: return "xt";
    case PlaneAxes::yt: return "yt";
    case PlaneAxes::zt: return "zt";
  }
  return "??";
}

std::string plane_key(std::size_t tier, const char* group, PlaneAxes axes) {
  return "tier" + std::to_string(tier) + "/" + group + "/" + axes_name(axes);
}

template <typename T>
std::vector<BasicTensor<T>> PlaneSet<T>::all() const {
  std::vector<BasicTensor<T>> out(static_planes.begin(), static_planes.end());
  out.insert(out.end(), dynamic_spatial.begin(), dynamic_spatial.end());
  out.insert(out.end(), dynamic_temporal.begin(), dynamic_temporal.end());
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> PlaneSet<T>::dynamic_planes() const {
  std::vector<BasicTensor<T>> out(dynamic_spatial.begin(), dynamic_spatial.end());
  out.insert(out.end(), dynamic_temporal.begin(), dynamic_temporal.end());
  return out;
}

template <typename T>
PlaneCoords<T> project_points(std::span<const SpacetimePoint> points) {
  const std::size_t n = points.size();
  std::array<std::vector<T>, 6> tables;
  for (auto& t : tables) t.resize(2 * n);
  auto put = [&](PlaneAxes a, std::size_t i, double u, double v) {
    auto& t = tables[static_cast<std::size_t>(a)];
    t[2 * i] = static_cast<T>(u);
    t[2 * i + 1] = static_cast<T>(v);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::clamp(points[i].x, 0.0, 1.0);
    const double y = std::clamp(points[i].y, 0.0, 1.0);
    const double z = std::clamp(points[i].z, 0.0, 1.0);
    const double t = std::clamp(points[i].t, 0.0, 1.0);
    put(PlaneAxes::xy, i, x, y);
    put(PlaneAxes::xz, i, x, z);
    put(PlaneAxes::yz, i, y, z);
    put(PlaneAxes::xt, i, x, t);
    put(PlaneAxes::yt, i, y, t);
    put(PlaneAxes::zt, i, z, t);
  }
  PlaneCoords<T> coords;
  coords.count = n;
  for (std::size_t a = 0; a < 6; ++a) coords.by_axes[a] = BasicTensor<T>({n, 2}, std::move(tables[a]));
  return coords;
}

template <typename T>
BasicTensor<T> sample_static(const PlaneSet<T>& tier, const PlaneCoords<T>& coords) {
  auto f = grid_sample_bilinear(tier.static_planes[0], coords[PlaneAxes::xy]);
  f = f * grid_sample_bilinear(tier.static_planes[1], coords[PlaneAxes::xz]);
  return f * grid_sample_bilinear(tier.static_planes[2], coords[PlaneAxes::yz]);
}

template <typename T>
BasicTensor<T> sample_dynamic(const PlaneSet<T>& tier, const PlaneCoords<T>& coords) {
  auto f = grid_sample_bilinear(tier.dynamic_spatial[0], coords[PlaneAxes::xy]);
  f = f * grid_sample_bilinear(tier.dynamic_spatial[1], coords[PlaneAxes::xz]);
  f = f * grid_sample_bilinear(tier.dynamic_spatial[2], coords[PlaneAxes::yz]);
  f = f * grid_sample_bilinear(tier.dynamic_temporal[0], coords[PlaneAxes::xt]);
  f = f * grid_sample_bilinear(tier.dynamic_temporal[1], coords[PlaneAxes::yt]);
  return f * grid_sample_bilinear(tier.dynamic_temporal[2], coords[PlaneAxes::zt]);
}

template <typename T>
BasicTensor<T> combine(const BasicTensor<T>& f_static, const BasicTensor<T>& f_dynamic) {
  if (f_static.shape() != f_dynamic.shape() || f_static.rank() != 2) {
    throw DimensionError("combine: static " + shape_string(f_static.shape()) + " vs dynamic " +
                         shape_string(f_dynamic.shape()));
  }
  return concat(std::vector<BasicTensor<T>>{f_static, f_dynamic}, 0);
}

template <typename T>
std::vector<PlaneSet<T>> init_planes(const TierConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto make = [&rng](Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(v), true);
  };
  std::vector<PlaneSet<T>> sets;
  sets.reserve(config.size());
  for (const auto& spec : config.tiers) {
    const std::size_t d = spec.feature_dim, r = spec.spatial_resolution, rt = spec.temporal_resolution;
    PlaneSet<T> set;
    for (auto& p : set.static_planes) p = make({d, r, r}, 0.9, 1.1);
    for (auto& p : set.dynamic_spatial) p = make({d, r, r}, 0.9, 1.1);
    // tiny noise only: frozen temporal planes must carry no usable time signal
    for (auto& p : set.dynamic_temporal) p = make({d, r, rt}, 1.0 - 1e-4, 1.0 + 1e-4);
    sets.push_back(std::move(set));
  }
  return sets;
}

#define TKP_INSTANTIATE(T)                                                                          \
  template struct PlaneSet<T>;                                                                      \
  template PlaneCoords<T> project_points<T>(std::span<const SpacetimePoint>);                       \
  template BasicTensor<T> sample_static<T>(const PlaneSet<T>&, const PlaneCoords<T>&);              \
  template BasicTensor<T> sample_dynamic<T>(const PlaneSet<T>&, const PlaneCoords<T>&);             \
  template BasicTensor<T> combine<T>(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template std::vector<PlaneSet<T>> init_planes<T>(const TierConfig&, std::uint64_t);

TKP_INSTANTIATE(float)
TKP_INSTANTIATE(double)

#undef TKP_INSTANTIATE

}  // namespace tkp
