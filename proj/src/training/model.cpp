#include "tkp/model.hpp"

#include "tkp/errors.hpp"

namespace tkp {

void ModelConfig::validate() const {
  tiers.validate();
  if (image_width == 0 || image_height == 0) throw ConfigError("model: image size must be positive");
  for (std::size_t k = 0; k < tiers.size(); ++k) {
    const std::size_t ds = tiers[k].downsample;
    if (image_width % ds != 0 || image_height % ds != 0) {
      throw ConfigError("model: image " + std::to_string(image_width) + "x" + std::to_string(image_height) +
                        " is not divisible by tier " + std::to_string(k) + " downsample factor " + std::to_string(ds));
    }
  }
  decoder_block_count(image_height, image_width, map_height(0), map_width(0));
}

DecoderConfig ModelConfig::decoder_config() const {
  DecoderConfig d;
  for (const auto& t : tiers.tiers) d.tier_widths.push_back(t.output_width);
  d.n_blocks = decoder_block_count(image_height, image_width, map_height(0), map_width(0));
  d.final_convs = final_convs;
  return d;
}

std::size_t ray_count(const TierConfig& tiers, std::size_t image_width, std::size_t image_height) {
  std::size_t rays = 0;
  for (const auto& t : tiers.tiers) {
    if (image_width % t.downsample != 0 || image_height % t.downsample != 0) {
      throw ContractError("ray_count: image " + std::to_string(image_width) + "x" + std::to_string(image_height) +
                          " is not divisible by downsample factor " + std::to_string(t.downsample));
    }
    rays += (image_width / t.downsample) * (image_height / t.downsample);
  }
  return rays;
}

template <typename T>
Model<T> Model<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> m;
  m.config = config;
  m.planes = init_planes<T>(config.tiers, seed);
  std::mt19937_64 rng(seed + 0x632be59bd9b4e019ULL);
  for (const auto& t : config.tiers.tiers) m.heads.push_back(FieldHeads<T>::init(t.feature_dim, t.output_width, rng));
  m.decoder = Decoder<T>::init(config.decoder_config(), rng);
  return m;
}

template <typename T>
std::vector<FeatureMaps<T>> Model<T>::render_maps(const CameraPose& camera, const SceneBounds& bounds,
                                                  std::size_t samples_per_ray, std::mt19937_64* jitter) const {
  if (camera.width != config.image_width || camera.height != config.image_height) {
    throw ContractError("render: camera is " + std::to_string(camera.width) + "x" + std::to_string(camera.height) +
                        ", model expects " + std::to_string(config.image_width) + "x" +
                        std::to_string(config.image_height));
  }
  std::vector<TierSamples> samples;
  for (std::size_t k = 0; k < config.tiers.size(); ++k) {
    samples.push_back(build_tier_samples(camera, bounds, config.map_width(k), config.map_height(k), samples_per_ray, jitter));
  }
  return render_feature_maps<T>(planes, heads, samples);
}

template <typename T>
BasicTensor<T> Model<T>::render(const CameraPose& camera, const SceneBounds& bounds, std::size_t samples_per_ray,
                                std::mt19937_64* jitter) const {
  const auto maps = render_maps(camera, bounds, samples_per_ray, jitter);
  return decode_image<T>(decoder, maps, config.image_height, config.image_width);
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> Model<T>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    for (std::size_t a = 0; a < 3; ++a) {
      out.emplace_back(plane_key(k, "static", kSpatialAxes[a]), planes[k].static_planes[a]);
      out.emplace_back(plane_key(k, "dyn_spatial", kSpatialAxes[a]), planes[k].dynamic_spatial[a]);
      out.emplace_back(plane_key(k, "dyn_temporal", kTemporalAxes[a]), planes[k].dynamic_temporal[a]);
    }
  }
  for (std::size_t k = 0; k < heads.size(); ++k) {
    for (auto& p : heads[k].named_parameters("tier" + std::to_string(k) + "/heads")) out.push_back(std::move(p));
  }
  for (auto& p : decoder.named_parameters()) out.push_back(std::move(p));
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::static_plane_params() const {
  std::vector<BasicTensor<T>> out;
  for (const auto& p : planes) out.insert(out.end(), p.static_planes.begin(), p.static_planes.end());
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::dynamic_plane_params() const {
  std::vector<BasicTensor<T>> out;
  for (const auto& p : planes) {
    const auto d = p.dynamic_planes();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::head_params() const {
  std::vector<BasicTensor<T>> out;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    for (auto& [name, t] : heads[k].named_parameters("")) out.push_back(t);
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::decoder_params() const {
  std::vector<BasicTensor<T>> out;
  for (auto& [name, t] : decoder.named_parameters()) out.push_back(t);
  return out;
}

template struct Model<float>;
template struct Model<double>;

}  // namespace tkp
