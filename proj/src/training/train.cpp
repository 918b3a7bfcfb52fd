#include "tkp/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "tkp/checkpoint_io.hpp"
#include "tkp/errors.hpp"
#include "tkp/metrics.hpp"
#include "tkp/text_format.hpp"

namespace tkp {
namespace {

std::string num(double v) { return format_number(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }

const std::vector<std::string>& tier_fields() {
  static const std::vector<std::string> fields = {"feature_dim", "spatial_resolution", "temporal_resolution",
                                                  "downsample", "output_width"};
  return fields;
}

std::size_t& tier_field(TierSpec& t, const std::string& field) {
  if (field == "feature_dim") return t.feature_dim;
  if (field == "spatial_resolution") return t.spatial_resolution;
  if (field == "temporal_resolution") return t.temporal_resolution;
  if (field == "downsample") return t.downsample;
  return t.output_width;
}

// tier<k>.<field> -> (k, field)
std::optional<std::pair<std::size_t, std::string>> split_tier_key(const std::string& key) {
  if (key.rfind("tier", 0) != 0) return std::nullopt;
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 4) return std::nullopt;
  std::size_t k = 0;
  const auto res = std::from_chars(key.data() + 4, key.data() + dot, k);
  if (res.ec != std::errc() || res.ptr != key.data() + dot) return std::nullopt;
  const std::string field = key.substr(dot + 1);
  if (std::find(tier_fields().begin(), tier_fields().end(), field) == tier_fields().end()) return std::nullopt;
  return std::make_pair(k, field);
}

const std::vector<std::string>& ladder_keys() {
  static const std::vector<std::string> keys = {"n_tiers", "temporal_resolution", "feature_dim"};
  return keys;
}

const std::vector<std::string>& scalar_keys() {
  static const std::vector<std::string> keys = {
      "learning_rate", "iterations",   "final_convs",    "samples_per_ray",     "near",
      "far",           "seed",         "tv_weight",      "cosine_decay",        "jitter",
      "freeze_dynamic", "checkpoint_interval", "validation_interval"};
  return keys;
}

void set_scalar(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "learning_rate") c.learning_rate = parse_number(key, value);
  else if (key == "iterations") c.iterations = parse_count(key, value);
  else if (key == "final_convs") c.final_convs = parse_count(key, value);
  else if (key == "samples_per_ray") c.samples_per_ray = parse_count(key, value);
  else if (key == "near") c.near = value == "auto" ? std::nullopt : std::optional(parse_number(key, value));
  else if (key == "far") c.far = value == "auto" ? std::nullopt : std::optional(parse_number(key, value));
  else if (key == "seed") c.seed = parse_count(key, value);
  else if (key == "tv_weight") c.tv_weight = parse_number(key, value);
  else if (key == "cosine_decay") c.cosine_decay = parse_flag(key, value);
  else if (key == "jitter") c.jitter = parse_flag(key, value);
  else if (key == "freeze_dynamic") c.freeze_dynamic = parse_flag(key, value);
  else if (key == "checkpoint_interval") c.checkpoint_interval = parse_count(key, value);
  else if (key == "validation_interval") c.validation_interval = parse_count(key, value);
}

std::vector<float> to_float(std::span<const float> v) { return {v.begin(), v.end()}; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (samples_per_ray < 1) throw ConfigError("samples_per_ray must be at least 1");
  if (tv_weight < 0) throw ConfigError("tv_weight must be non-negative");
  if (near && far && !(*near < *far)) throw ConfigError("near must be smaller than far");
  tiers.validate();
}

bool is_train_key(const std::string& key) {
  return std::find(scalar_keys().begin(), scalar_keys().end(), key) != scalar_keys().end() ||
         std::find(ladder_keys().begin(), ladder_keys().end(), key) != ladder_keys().end() ||
         split_tier_key(key).has_value();
}

std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> out = {
      {"learning_rate", num(c.learning_rate)},
      {"iterations", num(std::uint64_t{c.iterations})},
      {"final_convs", num(std::uint64_t{c.final_convs})},
      {"samples_per_ray", num(std::uint64_t{c.samples_per_ray})},
      {"near", c.near ? num(*c.near) : "auto"},
      {"far", c.far ? num(*c.far) : "auto"},
      {"seed", num(c.seed)},
      {"tv_weight", num(c.tv_weight)},
      {"cosine_decay", c.cosine_decay ? "true" : "false"},
      {"jitter", c.jitter ? "true" : "false"},
      {"freeze_dynamic", c.freeze_dynamic ? "true" : "false"},
      {"checkpoint_interval", num(std::uint64_t{c.checkpoint_interval})},
      {"validation_interval", num(std::uint64_t{c.validation_interval})},
      {"n_tiers", num(std::uint64_t{c.tiers.size()})},
  };
  for (std::size_t k = 0; k < c.tiers.size(); ++k) {
    TierSpec t = c.tiers[k];
    for (const auto& f : tier_fields()) {
      out.emplace_back("tier" + std::to_string(k) + "." + f, num(std::uint64_t{tier_field(t, f)}));
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> apply_train_entries(
    TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::vector<std::pair<std::string, std::string>> rest;
  for (const auto& [key, value] : entries) {
    if (std::find(ladder_keys().begin(), ladder_keys().end(), key) == ladder_keys().end()) continue;
    std::size_t n = config.tiers.size();
    std::size_t rt = config.tiers.tiers.empty() ? 30 : config.tiers[0].temporal_resolution;
    std::size_t d = config.tiers.tiers.empty() ? 16 : config.tiers[0].feature_dim;
    const std::size_t v = parse_count(key, value);
    if (key == "n_tiers") n = v;
    else if (key == "temporal_resolution") rt = v;
    else d = v;
    if (n == 0) throw ConfigError("n_tiers must be at least 1");
    config.tiers = TierConfig::standard(n, rt, d);
  }
  for (const auto& [key, value] : entries) {
    if (std::find(ladder_keys().begin(), ladder_keys().end(), key) != ladder_keys().end()) continue;
    if (auto tk = split_tier_key(key)) {
      if (tk->first >= config.tiers.size()) {
        throw ConfigError(key + ": only " + std::to_string(config.tiers.size()) + " tiers are configured");
      }
      tier_field(config.tiers.tiers[tk->first], tk->second) = parse_count(key, value);
    } else if (std::find(scalar_keys().begin(), scalar_keys().end(), key) != scalar_keys().end()) {
      set_scalar(config, key, value);
    } else {
      rest.emplace_back(key, value);
    }
  }
  return rest;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  ArrayContainer c;
  for (auto& [k, v] : train_config_entries(ck.config)) c.metadata["train." + k] = v;
  c.metadata["model.image_width"] = num(std::uint64_t{ck.model.config.image_width});
  c.metadata["model.image_height"] = num(std::uint64_t{ck.model.config.image_height});
  c.metadata["model.final_convs"] = num(std::uint64_t{ck.model.config.final_convs});
  c.metadata["model.n_tiers"] = num(std::uint64_t{ck.model.config.tiers.size()});
  for (std::size_t k = 0; k < ck.model.config.tiers.size(); ++k) {
    TierSpec t = ck.model.config.tiers[k];
    for (const auto& f : tier_fields()) {
      c.metadata["model.tier" + std::to_string(k) + "." + f] = num(std::uint64_t{tier_field(t, f)});
    }
  }
  for (int i = 0; i < 3; ++i) {
    c.metadata["bounds.min" + std::to_string(i)] = num(ck.bounds.min[i]);
    c.metadata["bounds.max" + std::to_string(i)] = num(ck.bounds.max[i]);
  }
  c.metadata["bounds.near"] = num(ck.bounds.near);
  c.metadata["bounds.far"] = num(ck.bounds.far);
  c.metadata["state.iteration"] = num(ck.iteration);
  c.metadata["state.last_loss"] = num(ck.last_loss);
  c.metadata["state.recent_mean_loss"] = num(ck.recent_mean_loss);
  for (const auto& [name, t] : ck.model.named_parameters()) c.arrays.push_back({name, t.shape(), to_float(t.values())});
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const ArrayContainer c = read_container(path);
  auto meta = [&](const std::string& key) -> const std::string& {
    const auto it = c.metadata.find(key);
    if (it == c.metadata.end()) throw LoadError(path.string() + ": checkpoint lacks metadata '" + key + "'");
    return it->second;
  };
  Checkpoint ck;
  try {
    std::vector<std::pair<std::string, std::string>> train_entries;
    for (const auto& [k, v] : c.metadata) {
      if (k.rfind("train.", 0) == 0) train_entries.emplace_back(k.substr(6), v);
    }
    apply_train_entries(ck.config, train_entries);

    ModelConfig mc;
    mc.image_width = parse_count("image_width", meta("model.image_width"));
    mc.image_height = parse_count("image_height", meta("model.image_height"));
    mc.final_convs = parse_count("final_convs", meta("model.final_convs"));
    const std::size_t n_tiers = parse_count("n_tiers", meta("model.n_tiers"));
    mc.tiers.tiers.assign(n_tiers, TierSpec{});
    for (std::size_t k = 0; k < n_tiers; ++k) {
      for (const auto& f : tier_fields()) {
        const std::string key = "model.tier" + std::to_string(k) + "." + f;
        tier_field(mc.tiers.tiers[k], f) = parse_count(key, meta(key));
      }
    }
    for (int i = 0; i < 3; ++i) {
      ck.bounds.min[i] = parse_number("bounds", meta("bounds.min" + std::to_string(i)));
      ck.bounds.max[i] = parse_number("bounds", meta("bounds.max" + std::to_string(i)));
    }
    ck.bounds.near = parse_number("near", meta("bounds.near"));
    ck.bounds.far = parse_number("far", meta("bounds.far"));
    ck.iteration = parse_count("iteration", meta("state.iteration"));
    ck.last_loss = parse_number("last_loss", meta("state.last_loss"));
    ck.recent_mean_loss = parse_number("recent_mean_loss", meta("state.recent_mean_loss"));
    ck.model = Model<float>::init(mc, 0);
  } catch (const ConfigError& e) {
    throw LoadError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  for (auto& [name, t] : ck.model.named_parameters()) {
    const NamedArray* a = c.find(name);
    if (!a) throw LoadError(path.string() + ": checkpoint lacks array '" + name + "'");
    if (a->shape != t.shape()) {
      throw LoadError(path.string() + ": array '" + name + "' has shape " + shape_string(a->shape) + ", expected " +
                      shape_string(t.shape()));
    }
    std::copy(a->values.begin(), a->values.end(), t.mutable_values().begin());
  }
  return ck;
}

template <typename T>
BasicTensor<T> total_variation(const std::vector<BasicTensor<T>>& planes) {
  double total = 0;
  for (const auto& p : planes) {
    if (p.rank() != 3) throw DimensionError("total_variation: expected D x A x B planes, got " + shape_string(p.shape()));
    const std::size_t d = p.dim(0), a = p.dim(1), b = p.dim(2);
    const auto v = p.values();
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const std::size_t at = (c * a + i) * b + j;
          if (i + 1 < a) s += std::pow(static_cast<double>(v[at + b] - v[at]), 2);
          if (j + 1 < b) s += std::pow(static_cast<double>(v[at + 1] - v[at]), 2);
        }
      }
    }
    total += s / static_cast<double>(p.numel());
  }
  return make_op_result<T>("total_variation", {1}, {static_cast<T>(total)}, planes, [](Node<T>& self) {
    const T g = self.grad[0];
    for (auto& in : self.inputs) {
      if (!in->requires_grad && !in->backward) continue;
      const std::size_t d = in->shape[0], a = in->shape[1], b = in->shape[2];
      const auto& v = in->values;
      auto& gv = in->ensure_grad();
      const T k = g * T(2) / static_cast<T>(v.size());
      for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < a; ++i) {
          for (std::size_t j = 0; j < b; ++j) {
            const std::size_t at = (c * a + i) * b + j;
            if (i + 1 < a) {
              const T diff = v[at + b] - v[at];
              gv[at + b] += k * diff;
              gv[at] -= k * diff;
            }
            if (j + 1 < b) {
              const T diff = v[at + 1] - v[at];
              gv[at + 1] += k * diff;
              gv[at] -= k * diff;
            }
          }
        }
      }
    }
  });
}

template <typename T>
std::vector<BasicTensor<T>> trainable_parameters(const Model<T>& model, const TrainConfig& config) {
  std::vector<BasicTensor<T>> params = model.static_plane_params();
  auto dynamic = model.dynamic_plane_params();
  for (auto& p : dynamic) p.set_requires_grad(!config.freeze_dynamic);
  if (!config.freeze_dynamic) params.insert(params.end(), dynamic.begin(), dynamic.end());
  for (auto& p : model.head_params()) params.push_back(p);
  for (auto& p : model.decoder_params()) params.push_back(p);
  return params;
}

template <typename T>
double train_step(const Model<T>& model, Adam<T>& adam, const CameraPose& camera, const BasicTensor<T>& target,
                  const SceneBounds& bounds, const TrainConfig& config, std::mt19937_64& rng) {
  const auto rendered = model.render(camera, bounds, config.samples_per_ray, config.jitter ? &rng : nullptr);
  auto loss = mse_loss(rendered, target);
  if (config.tv_weight > 0) {
    std::vector<BasicTensor<T>> planes;
    for (const auto& p : model.planes) {
      for (auto& t : p.all()) {
        if (t.requires_grad()) planes.push_back(t);
      }
    }
    loss = loss + scale(total_variation(planes), static_cast<T>(config.tv_weight));
  }
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw NumericError("non-finite training loss at t=" + num(camera.timestamp) +
                       "; first non-finite tensor: " + first_non_finite(loss).value_or("loss"));
  }
  backward(loss);
  adam.step();
  return value;
}

SceneBounds training_bounds(const Manifest& manifest, const TrainConfig& config) {
  if (!manifest.bounds) throw ConfigError("manifest has no 'bounds' record; scene bounds are required for training");
  SceneBounds b = *manifest.bounds;
  if (config.near) b.near = *config.near;
  if (config.far) b.far = *config.far;
  b.validate();
  return b;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "iteration,loss,wall_ms\n";
  for (const auto& r : log) os << r.iteration << ',' << num(r.loss) << ',' << num(r.wall_ms) << '\n';
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

TrainResult train(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const auto train_idx = data.manifest.indices(Split::train);
  if (train_idx.empty()) throw ConfigError("training split is empty");
  const auto val_idx = data.manifest.indices(Split::val);
  const SceneBounds bounds = training_bounds(data.manifest, config);

  const auto& cam0 = data.manifest.frames[train_idx.front()].camera;
  ModelConfig mc;
  mc.tiers = config.tiers;
  mc.image_width = cam0.width;
  mc.image_height = cam0.height;
  mc.final_convs = config.final_convs;

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.bounds = bounds;
  result.checkpoint.model = Model<float>::init(mc, config.seed);
  const Model<float>& model = result.checkpoint.model;

  std::vector<Tensor> targets;
  for (std::size_t i : train_idx) targets.push_back(image_to_tensor<float>(data.images[i]));

  Adam<float> adam(trainable_parameters(model, config), {config.learning_rate});
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 jitter_rng(config.seed ^ 0xa0761d6478bd642fULL);
  std::vector<std::size_t> order(train_idx.size());
  std::size_t cursor = order.size();
  std::deque<double> recent;
  double recent_sum = 0;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const std::size_t slot = order[cursor++];
    if (config.cosine_decay) {
      const double progress = static_cast<double>(it - 1) / static_cast<double>(config.iterations);
      adam.set_learning_rate(config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    }
    const auto start = std::chrono::steady_clock::now();
    const double loss = train_step(model, adam, data.manifest.frames[train_idx[slot]].camera, targets[slot], bounds,
                                   config, jitter_rng);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back({it, loss, ms});
    recent.push_back(loss);
    recent_sum += loss;
    if (recent.size() > 100) {
      recent_sum -= recent.front();
      recent.pop_front();
    }
    result.checkpoint.iteration = it;
    result.checkpoint.last_loss = loss;
    result.checkpoint.recent_mean_loss = recent_sum / static_cast<double>(recent.size());
    if (it % 100 == 0 || it == config.iterations) {
      spdlog::info("iteration {}/{}  loss {:.6f}  recent mean {:.6f}", it, config.iterations, loss,
                   result.checkpoint.recent_mean_loss);
    }
    if (config.validation_interval > 0 && it % config.validation_interval == 0 && !val_idx.empty()) {
      double total = 0;
      for (std::size_t i : val_idx) {
        const auto img =
            tensor_to_image(model.render(data.manifest.frames[i].camera, bounds, config.samples_per_ray));
        total += psnr(data.images[i], img);
      }
      spdlog::info("iteration {}: validation PSNR {:.3f} dB over {} frames", it,
                   total / static_cast<double>(val_idx.size()), val_idx.size());
    }
    if (!out_dir.empty() && config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0 &&
        it != config.iterations) {
      save_checkpoint(out_dir / ("checkpoint_" + std::to_string(it) + ".tkp"), result.checkpoint);
    }
  }
  if (!out_dir.empty()) {
    write_loss_log(out_dir / "loss_log.csv", result.log);
    save_checkpoint(out_dir / "checkpoint.tkp", result.checkpoint);
  }
  return result;
}

template BasicTensor<float> total_variation<float>(const std::vector<BasicTensor<float>>&);
template BasicTensor<double> total_variation<double>(const std::vector<BasicTensor<double>>&);
template std::vector<BasicTensor<float>> trainable_parameters<float>(const Model<float>&, const TrainConfig&);
template std::vector<BasicTensor<double>> trainable_parameters<double>(const Model<double>&, const TrainConfig&);
template double train_step<float>(const Model<float>&, Adam<float>&, const CameraPose&, const BasicTensor<float>&,
                                  const SceneBounds&, const TrainConfig&, std::mt19937_64&);
template double train_step<double>(const Model<double>&, Adam<double>&, const CameraPose&, const BasicTensor<double>&,
                                   const SceneBounds&, const TrainConfig&, std::mt19937_64&);

}  // namespace tkp
