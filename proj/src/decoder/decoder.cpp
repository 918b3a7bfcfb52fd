#include "tkp/decoder.hpp"

#include <cmath>

#include "tkp/errors.hpp"

namespace tkp {

template <typename T>
Conv<T> Conv<T>::init(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> w(out * in * kernel * kernel), b(out);
  for (auto& v : w) v = static_cast<T>(dist(rng));
  for (auto& v : b) v = static_cast<T>(dist(rng));
  return {BasicTensor<T>({out, in, kernel, kernel}, std::move(w), true), BasicTensor<T>({out}, std::move(b), true)};
}

template <typename T>
BasicTensor<T> DecoderBlock<T>::operator()(const BasicTensor<T>& x) const {
  const auto skip = up_1x1(upsample_bilinear_2x(x));
  const auto processed = relu(process_b(relu(process_a(x))));
  return skip + up_5x5(upsample_bilinear_2x(processed));
}

template <typename T>
DecoderBlock<T> DecoderBlock<T>::init(std::size_t in_channels, std::mt19937_64& rng) {
  if (in_channels < 2 || in_channels % 2 != 0) {
    throw ConfigError("decoder block needs an even channel count >= 2, got " + std::to_string(in_channels));
  }
  const std::size_t half = in_channels / 2;
  DecoderBlock<T> b;
  b.up_1x1 = Conv<T>::init(in_channels, half, 1, rng);
  b.process_a = Conv<T>::init(in_channels, in_channels, 3, rng);
  b.process_b = Conv<T>::init(in_channels, in_channels, 3, rng);
  b.up_5x5 = Conv<T>::init(in_channels, half, 5, rng);
  return b;
}

template <typename T>
BasicTensor<T> FinalBlock<T>::operator()(const BasicTensor<T>& x) const {
  BasicTensor<T> h = x;
  for (const auto& c : convs) h = relu(c(h));
  return sigmoid(to_rgb(h));
}

template <typename T>
FinalBlock<T> FinalBlock<T>::init(std::size_t channels, std::size_t n_convs, std::mt19937_64& rng) {
  FinalBlock<T> f;
  for (std::size_t i = 0; i < n_convs; ++i) f.convs.push_back(Conv<T>::init(channels, channels, 3, rng));
  f.to_rgb = Conv<T>::init(channels, 3, 3, rng);
  return f;
}

std::vector<std::size_t> DecoderConfig::block_inputs() const {
  if (tier_widths.empty()) throw ConfigError("decoder: at least one tier width is required");
  if (tier_widths.size() > n_blocks) {
    throw ConfigError("decoder: " + std::to_string(tier_widths.size()) + " tiers need at least as many blocks, got " +
                      std::to_string(n_blocks));
  }
  std::vector<std::size_t> inputs;
  std::size_t prev = 0;
  for (std::size_t n = 0; n < n_blocks; ++n) {
    const std::size_t in = prev + (n < tier_widths.size() ? tier_widths[n] : 0);
    if (in < 2 || in % 2 != 0) {
      throw ConfigError("decoder: block " + std::to_string(n) + " input has " + std::to_string(in) +
                        " channels; the halving rule needs an even count >= 2");
    }
    inputs.push_back(in);
    prev = in / 2;
  }
  return inputs;
}

template <typename T>
Decoder<T> Decoder<T>::init(const DecoderConfig& config, std::mt19937_64& rng) {
  const auto inputs = config.block_inputs();
  Decoder<T> d;
  for (std::size_t in : inputs) d.blocks.push_back(DecoderBlock<T>::init(in, rng));
  d.final_block = FinalBlock<T>::init(inputs.back(), config.final_convs, rng);  // 2 streams x in/2
  return d;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> Decoder<T>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  auto add = [&out](const std::string& name, const Conv<T>& c) {
    out.emplace_back(name + "/weight", c.weight);
    out.emplace_back(name + "/bias", c.bias);
  };
  for (std::size_t n = 0; n < blocks.size(); ++n) {
    const std::string base = "decoder/block" + std::to_string(n);
    add(base + "/up_1x1", blocks[n].up_1x1);
    add(base + "/process_a", blocks[n].process_a);
    add(base + "/process_b", blocks[n].process_b);
    add(base + "/up_5x5", blocks[n].up_5x5);
  }
  for (std::size_t i = 0; i < final_block.convs.size(); ++i) {
    add("decoder/final/conv" + std::to_string(i), final_block.convs[i]);
  }
  add("decoder/final/to_rgb", final_block.to_rgb);
  return out;
}

template <typename T>
BasicTensor<T> decoder_block_forward(const DecoderBlock<T>& block, const std::optional<BasicTensor<T>>& tier_map,
                                     const std::optional<BasicTensor<T>>& prev) {
  BasicTensor<T> input;
  if (tier_map && prev) {
    if (tier_map->rank() != 3 || prev->rank() != 3 || tier_map->dim(1) != prev->dim(1) ||
        tier_map->dim(2) != prev->dim(2)) {
      throw ContractError("decoder block: tier map " + shape_string(tier_map->shape()) +
                          " and previous output " + shape_string(prev->shape()) + " differ spatially");
    }
    input = concat(std::vector<BasicTensor<T>>{*prev, *tier_map}, 0);
  } else if (tier_map) {
    input = *tier_map;
  } else if (prev) {
    input = *prev;
  } else {
    throw ContractError("decoder block: needs a tier map, a previous output, or both");
  }
  if (input.rank() != 3 || input.dim(0) != block.in_channels()) {
    throw DimensionError("decoder block expects " + std::to_string(block.in_channels()) + " channels, got " +
                         shape_string(input.shape()));
  }
  return block(input);
}

std::size_t decoder_block_count(std::size_t image_h, std::size_t image_w, std::size_t map_h, std::size_t map_w) {
  if (map_h == 0 || map_w == 0 || image_h % map_h != 0 || image_w % map_w != 0 ||
      image_h / map_h != image_w / map_w) {
    throw ConfigError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " is not a uniform multiple of the tier-0 map " + std::to_string(map_h) + "x" +
                      std::to_string(map_w));
  }
  std::size_t ratio = image_h / map_h;
  std::size_t blocks = 0;
  while (ratio > 1) {
    if (ratio % 2 != 0) {
      throw ConfigError("image height " + std::to_string(image_h) + " is not a power-of-two multiple of map height " +
                        std::to_string(map_h));
    }
    ratio /= 2;
    ++blocks;
  }
  return blocks;
}

template <typename T>
BasicTensor<T> decode_image(const Decoder<T>& decoder, std::span<const FeatureMaps<T>> maps, std::size_t height,
                            std::size_t width) {
  if (maps.empty()) throw ContractError("decode_image: no feature maps");
  const auto& base = maps[0].static_map;
  const std::size_t blocks = decoder_block_count(height, width, base.dim(1), base.dim(2));
  if (blocks != decoder.blocks.size()) {
    throw ConfigError("decode_image: target " + std::to_string(height) + "x" + std::to_string(width) + " needs " +
                      std::to_string(blocks) + " blocks, decoder has " + std::to_string(decoder.blocks.size()));
  }
  if (maps.size() > blocks) throw ConfigError("decode_image: more tiers than decoder blocks");
  auto run_stream = [&](bool dynamic) {
    std::optional<BasicTensor<T>> x;
    for (std::size_t n = 0; n < blocks; ++n) {
      std::optional<BasicTensor<T>> tier;
      if (n < maps.size()) tier = dynamic ? maps[n].dynamic_map : maps[n].static_map;
      x = decoder_block_forward(decoder.blocks[n], tier, x);
    }
    return *x;
  };
  const auto fused = concat(std::vector<BasicTensor<T>>{run_stream(false), run_stream(true)}, 0);
  return decoder.final_block(fused);
}

#define TKP_INSTANTIATE(T)                                                                                      \
  template struct Conv<T>;                                                                                      \
  template struct DecoderBlock<T>;                                                                              \
  template struct FinalBlock<T>;                                                                                \
  template struct Decoder<T>;                                                                                   \
  template BasicTensor<T> decoder_block_forward<T>(const DecoderBlock<T>&, const std::optional<BasicTensor<T>>&, \
                                                   const std::optional<BasicTensor<T>>&);                       \
  template BasicTensor<T> decode_image<T>(const Decoder<T>&, std::span<const FeatureMaps<T>>, std::size_t,      \
                                          std::size_t);

TKP_INSTANTIATE(float)
TKP_INSTANTIATE(double)

#undef TKP_INSTANTIATE

}  // namespace tkp
