#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tkp/camera.hpp"
#include "tkp/decoder.hpp"
#include "tkp/field.hpp"
#include "tkp/planes.hpp"

namespace tkp {

/// Everything needed to rebuild a model with identical parameter shapes.
struct ModelConfig {
  TierConfig tiers = TierConfig::standard(2, 30);
  std::size_t image_width = 64;
  std::size_t image_height = 64;
  std::size_t final_convs = 2;

  /// Feature-map size of tier k.
  std::size_t map_width(std::size_t k) const { return image_width / tiers[k].downsample; }
  std::size_t map_height(std::size_t k) const { return image_height / tiers[k].downsample; }

  /// Throws ConfigError if the image does not divide into the tier maps or
  /// the tier-0 map is not a power-of-two fraction of the image.
  void validate() const;
  DecoderConfig decoder_config() const;
};

/// Rays per rendered frame: the sum over tiers of feature-map pixels.
std::size_t ray_count(const TierConfig& tiers, std::size_t image_width, std::size_t image_height);

/// Planes, per-tier field heads and the image decoder.
template <typename T>
struct Model {
  ModelConfig config;
  std::vector<PlaneSet<T>> planes;
  std::vector<FieldHeads<T>> heads;
  Decoder<T> decoder;

  static Model init(const ModelConfig& config, std::uint64_t seed);

  /// Feature maps for every tier. `jitter` perturbs sample depths.
  std::vector<FeatureMaps<T>> render_maps(const CameraPose& camera, const SceneBounds& bounds,
                                          std::size_t samples_per_ray, std::mt19937_64* jitter = nullptr) const;

  /// 3 x H x W image in (0,1). Throws ContractError if the camera's
  /// resolution differs from the model's.
  BasicTensor<T> render(const CameraPose& camera, const SceneBounds& bounds, std::size_t samples_per_ray,
                        std::mt19937_64* jitter = nullptr) const;

  /// Stable names: tier<k>/<group>/<axes>, tier<k>/heads/..., decoder/...
  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const;

  std::vector<BasicTensor<T>> static_plane_params() const;
  std::vector<BasicTensor<T>> dynamic_plane_params() const;
  std::vector<BasicTensor<T>> head_params() const;
  std::vector<BasicTensor<T>> decoder_params() const;
};

}  // namespace tkp
