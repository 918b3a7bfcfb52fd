#include "tkp/field.hpp"

#include <cmath>

#include "tkp/errors.hpp"

namespace tkp {

template <typename T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> w(in * out), b(out);
  for (auto& v : w) v = static_cast<T>(dist(rng));
  for (auto& v : b) v = static_cast<T>(dist(rng));
  return {BasicTensor<T>({in, out}, std::move(w), true), BasicTensor<T>({out}, std::move(b), true)};
}

template <typename T>
BasicTensor<T> Mlp<T>::operator()(const BasicTensor<T>& x) const {
  BasicTensor<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

template <typename T>
Mlp<T> Mlp<T>::init(std::span<const std::size_t> widths, std::mt19937_64& rng) {
  Mlp<T> m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(Linear<T>::init(widths[i], widths[i + 1], rng));
  return m;
}

template <typename T>
FieldHeads<T> FieldHeads<T>::init(std::size_t feature_dim, std::size_t output_width, std::mt19937_64& rng) {
  const std::vector<std::size_t> density_widths = {feature_dim, kHeadHiddenWidth, kHeadHiddenWidth, 1};
  const std::vector<std::size_t> feature_widths = {feature_dim, kHeadHiddenWidth, kHeadHiddenWidth, output_width};
  FieldHeads<T> h;
  h.density = Mlp<T>::init(density_widths, rng);
  h.feature = Mlp<T>::init(feature_widths, rng);
  return h;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> FieldHeads<T>::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  auto add = [&](const char* name, const Mlp<T>& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      const std::string base = prefix + "/" + name + "/layer" + std::to_string(i);
      out.emplace_back(base + "/weight", mlp.layers[i].weight);
      out.emplace_back(base + "/bias", mlp.layers[i].bias);
    }
  };
  add("density", density);
  add("feature", feature);
  return out;
}

template <typename T>
FieldOutput<T> query_field(const FieldHeads<T>& heads, const BasicTensor<T>& combined) {
  if (combined.rank() != 2 || combined.dim(1) != heads.input_width()) {
    throw DimensionError("query_field: heads expect width " + std::to_string(heads.input_width()) +
                         ", got " + shape_string(combined.shape()));
  }
  return {exponential(heads.density(combined)), heads.feature(combined)};
}

template <typename T>
Accumulated<T> volumetric_accumulate(const BasicTensor<T>& sigmas, const BasicTensor<T>& features,
                                     std::span<const double> deltas, std::size_t samples_per_ray) {
  const std::size_t rows = sigmas.numel();
  if (samples_per_ray == 0 || rows % samples_per_ray != 0) {
    throw DimensionError("volumetric_accumulate: " + std::to_string(rows) + " samples do not split into rays of " +
                         std::to_string(samples_per_ray));
  }
  if (features.rank() != 2 || features.dim(0) != rows || deltas.size() != rows) {
    throw DimensionError("volumetric_accumulate: features " + shape_string(features.shape()) + " / deltas " +
                         std::to_string(deltas.size()) + " do not match " + std::to_string(rows) + " sigmas");
  }
  const auto& sv = sigmas.node()->values;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!(sv[i] >= T(0))) throw ContractError("volumetric_accumulate: negative or NaN density at row " + std::to_string(i));
    if (!(deltas[i] > 0.0)) throw ContractError("volumetric_accumulate: non-positive step at row " + std::to_string(i));
  }
  const std::size_t s = samples_per_ray;
  const std::size_t n_rays = rows / s;
  const std::size_t f = features.dim(1);
  const auto& fv = features.node()->values;

  // Per-sample transmittance before (trans) and after (trans_next) the sample.
  auto trans_next = std::make_shared<std::vector<T>>(rows);
  auto weights = std::make_shared<std::vector<T>>(rows);
  auto delta_copy = std::make_shared<std::vector<T>>(rows);
  std::vector<T> pixels(n_rays * f, T(0));
  for (std::size_t r = 0; r < n_rays; ++r) {
    T optical_depth = T(0);
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t row = r * s + i;
      const T delta = static_cast<T>(deltas[row]);
      (*delta_copy)[row] = delta;
      const T trans = std::exp(-optical_depth);
      optical_depth += sv[row] * delta;
      const T after = std::exp(-optical_depth);
      (*trans_next)[row] = after;
      // T_i (1 - exp(-sigma delta)) computed as a difference of transmittances
      // would cancel badly for small sigma; use expm1 instead.
      const T w = trans * -std::expm1(-sv[row] * delta);
      (*weights)[row] = w;
      for (std::size_t c = 0; c < f; ++c) pixels[r * f + c] += w * fv[row * f + c];
    }
  }
  Accumulated<T> out;
  out.weights = *weights;
  out.pixels = make_op_result<T>(
      "volumetric_accumulate", {n_rays, f}, std::move(pixels), {sigmas, features},
      [trans_next, weights, delta_copy, s, n_rays, f](Node<T>& self) {
        auto& sig = *self.inputs[0];
        auto& feat = *self.inputs[1];
        const auto& g = self.grad;
        if (feat.requires_grad) {
          auto& gf = feat.ensure_grad();
          for (std::size_t r = 0; r < n_rays; ++r) {
            for (std::size_t i = 0; i < s; ++i) {
              const std::size_t row = r * s + i;
              for (std::size_t c = 0; c < f; ++c) gf[row * f + c] += (*weights)[row] * g[r * f + c];
            }
          }
        }
        if (sig.requires_grad) {
          auto& gs = sig.ensure_grad();
          for (std::size_t r = 0; r < n_rays; ++r) {
            // d pixel / d sigma_k = delta_k (T_{k+1} f_k - sum_{i>k} w_i f_i), projected on g.
            T tail = T(0);
            for (std::size_t i = s; i-- > 0;) {
              const std::size_t row = r * s + i;
              T proj = T(0);
              for (std::size_t c = 0; c < f; ++c) proj += g[r * f + c] * feat.values[row * f + c];
              gs[row] += (*delta_copy)[row] * ((*trans_next)[row] * proj - tail);
              tail += (*weights)[row] * proj;
            }
          }
        }
      });
  return out;
}

template <typename T>
std::vector<FeatureMaps<T>> render_feature_maps(std::span<const PlaneSet<T>> planes,
                                                std::span<const FieldHeads<T>> heads,
                                                std::span<const TierSamples> samples) {
  if (planes.size() != heads.size() || planes.size() != samples.size() || planes.empty()) {
    throw ContractError("render_feature_maps: " + std::to_string(planes.size()) + " plane sets, " +
                        std::to_string(heads.size()) + " heads, " + std::to_string(samples.size()) +
                        " ray sets");
  }
  std::vector<FeatureMaps<T>> maps;
  maps.reserve(planes.size());
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const TierSamples& ts = samples[k];
    if (ts.points.size() != ts.ray_count() * ts.samples_per_ray || ts.deltas.size() != ts.points.size()) {
      throw ContractError("render_feature_maps: tier " + std::to_string(k) + " sample count mismatch");
    }
    if (k > 0 && (ts.map_w != 2 * samples[k - 1].map_w || ts.map_h != 2 * samples[k - 1].map_h)) {
      throw ContractError("render_feature_maps: tier " + std::to_string(k) + " map " + std::to_string(ts.map_w) +
                          "x" + std::to_string(ts.map_h) + " is not twice the previous tier's");
    }
    if (heads[k].input_width() != planes[k].feature_dim()) {
      throw DimensionError("render_feature_maps: tier " + std::to_string(k) + " heads/planes width mismatch");
    }
    const auto coords = project_points<T>(ts.points);
    const auto combined = combine(sample_static(planes[k], coords), sample_dynamic(planes[k], coords));
    const auto field = query_field(heads[k], combined);

    // Static rays followed by dynamic rays share the same step sizes.
    std::vector<double> deltas(ts.deltas);
    deltas.insert(deltas.end(), ts.deltas.begin(), ts.deltas.end());
    const auto acc = volumetric_accumulate(field.sigmas, field.features, deltas, ts.samples_per_ray);

    const std::size_t n_rays = ts.ray_count();
    const std::size_t width = heads[k].output_width();
    auto to_map = [&](std::size_t begin) {
      return reshape(transpose(slice_rows(acc.pixels, begin, begin + n_rays)), {width, ts.map_h, ts.map_w});
    };
    maps.push_back({to_map(0), to_map(n_rays)});
  }
  return maps;
}

#define TKP_INSTANTIATE(T)                                                                                  \
  template struct Linear<T>;                                                                                \
  template struct Mlp<T>;                                                                                   \
  template struct FieldHeads<T>;                                                                            \
  template FieldOutput<T> query_field<T>(const FieldHeads<T>&, const BasicTensor<T>&);                      \
  template Accumulated<T> volumetric_accumulate<T>(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                                   std::span<const double>, std::size_t);                   \
  template std::vector<FeatureMaps<T>> render_feature_maps<T>(std::span<const PlaneSet<T>>,                 \
                                                              std::span<const FieldHeads<T>>,               \
                                                              std::span<const TierSamples>);

TKP_INSTANTIATE(float)
TKP_INSTANTIATE(double)

#undef TKP_INSTANTIATE

}  // namespace tkp
