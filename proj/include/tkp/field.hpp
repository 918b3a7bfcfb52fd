#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tkp/camera.hpp"
#include "tkp/ops.hpp"
#include "tkp/planes.hpp"

namespace tkp {

/// Fully connected layer, y = x W + b with W stored in x out.
template <typename T>
struct Linear {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return matmul(x, weight) + bias; }
  static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);
};

/// Stack of linear layers with relu between them; the last layer is linear.
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
  std::size_t input_width() const { return layers.front().weight.dim(0); }
  std::size_t output_width() const { return layers.back().weight.dim(1); }
  static Mlp init(std::span<const std::size_t> widths, std::mt19937_64& rng);
};

inline constexpr std::size_t kHeadHiddenWidth = 64;

/// Density head D -> 64 -> 64 -> 1 (exponential output) and feature head
/// D -> 64 -> 64 -> F (linear output). One pair per tier, shared by the
/// static and dynamic rows.
template <typename T>
struct FieldHeads {
  Mlp<T> density;
  Mlp<T> feature;

  std::size_t input_width() const { return density.input_width(); }
  std::size_t output_width() const { return feature.output_width(); }

  static FieldHeads init(std::size_t feature_dim, std::size_t output_width, std::mt19937_64& rng);
  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters(const std::string& prefix) const;
};

template <typename T>
struct FieldOutput {
  BasicTensor<T> sigmas;    // rows x 1, all >= 0
  BasicTensor<T> features;  // rows x F
};

template <typename T>
FieldOutput<T> query_field(const FieldHeads<T>& heads, const BasicTensor<T>& combined);

template <typename T>
struct Accumulated {
  BasicTensor<T> pixels;   // rays x F
  std::vector<T> weights;  // rays x S, not differentiable
};

/// Quadrature of the volume rendering integral over consecutive groups of
/// `samples_per_ray` rows: w_i = T_i (1 - exp(-sigma_i delta_i)),
/// T_i = exp(-sum_{j<i} sigma_j delta_j), pixel = sum_i w_i feature_i.
/// Differentiable in sigmas and features; deltas are constants.
template <typename T>
Accumulated<T> volumetric_accumulate(const BasicTensor<T>& sigmas, const BasicTensor<T>& features,
                                     std::span<const double> deltas, std::size_t samples_per_ray);

template <typename T>
struct FeatureMaps {
  BasicTensor<T> static_map;   // F x h x w
  BasicTensor<T> dynamic_map;  // F x h x w
};

/// Volume-renders one static and one dynamic feature map per tier.
template <typename T>
std::vector<FeatureMaps<T>> render_feature_maps(std::span<const PlaneSet<T>> planes,
                                                std::span<const FieldHeads<T>> heads,
                                                std::span<const TierSamples> samples);

}  // namespace tkp
