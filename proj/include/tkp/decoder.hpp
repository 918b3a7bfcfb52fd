#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tkp/field.hpp"
#include "tkp/ops.hpp"

namespace tkp {

/// "Same" 2-D convolution layer with bias.
template <typename T>
struct Conv {
  BasicTensor<T> weight;  // C_out x C_in x k x k
  BasicTensor<T> bias;    // C_out

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv2d(x, weight, bias, (kernel() - 1) / 2); }
  static Conv init(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng);
};

/// One upsampling stage. For a C x h x w input:
///   skip    = conv1x1(up2(x))                      C/2 x 2h x 2w
///   process = relu(conv3x3(relu(conv3x3(x))))      C   x h  x w
///   output  = skip + conv5x5(up2(process))         C/2 x 2h x 2w
template <typename T>
struct DecoderBlock {
  Conv<T> up_1x1;
  Conv<T> process_a;
  Conv<T> process_b;
  Conv<T> up_5x5;

  std::size_t in_channels() const { return up_1x1.in_channels(); }
  std::size_t out_channels() const { return up_1x1.out_channels(); }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  static DecoderBlock init(std::size_t in_channels, std::mt19937_64& rng);
};

/// N 3x3 relu convolutions, a 3x3 convolution to RGB, then a sigmoid.
template <typename T>
struct FinalBlock {
  std::vector<Conv<T>> convs;
  Conv<T> to_rgb;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  static FinalBlock init(std::size_t channels, std::size_t n_convs, std::mt19937_64& rng);
};

struct DecoderConfig {
  std::vector<std::size_t> tier_widths;  // F of each tier, injected at block k
  std::size_t n_blocks = 4;
  std::size_t final_convs = 2;

  /// Input channels of each block; throws ConfigError if the halving rule
  /// cannot be followed (odd channel count, more tiers than blocks).
  std::vector<std::size_t> block_inputs() const;
};

template <typename T>
struct Decoder {
  std::vector<DecoderBlock<T>> blocks;
  FinalBlock<T> final_block;

  static Decoder init(const DecoderConfig& config, std::mt19937_64& rng);
  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const;
};

/// Runs one block on the channel concatenation of `prev` and `tier_map`
/// (whichever are present).
template <typename T>
BasicTensor<T> decoder_block_forward(const DecoderBlock<T>& block, const std::optional<BasicTensor<T>>& tier_map,
                                     const std::optional<BasicTensor<T>>& prev);

/// Static and dynamic streams pass through every block with shared weights,
/// are concatenated along channels, and go through the final block.
/// Returns 3 x H x W in (0,1).
template <typename T>
BasicTensor<T> decode_image(const Decoder<T>& decoder, std::span<const FeatureMaps<T>> maps, std::size_t height,
                            std::size_t width);

/// log2(image / tier-0 map) along both axes; throws ConfigError unless both
/// ratios are the same power of two.
std::size_t decoder_block_count(std::size_t image_h, std::size_t image_w, std::size_t map_h, std::size_t map_w);

}  // namespace tkp
