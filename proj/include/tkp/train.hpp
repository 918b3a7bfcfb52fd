#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tkp/adam.hpp"
#include "tkp/dataset.hpp"
#include "tkp/model.hpp"

namespace tkp {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t iterations = 2000;
  TierConfig tiers = TierConfig::standard(2, 30);
  std::size_t final_convs = 2;
  std::size_t samples_per_ray = 48;
  std::optional<double> near;  // override the manifest bounds
  std::optional<double> far;
  std::uint64_t seed = 42;
  double tv_weight = 0.0;      // plane total variation, off by default
  bool cosine_decay = false;   // constant learning rate unless set
  bool jitter = true;          // stratified sample depths during training
  bool freeze_dynamic = false; // keep dynamic and spatio-temporal planes at their initial values
  std::size_t checkpoint_interval = 0;  // 0 writes only the final checkpoint
  std::size_t validation_interval = 0;  // 0 disables periodic validation PSNR

  void validate() const;
};

/// Flat key/value view of a TrainConfig, the format used by config files
/// and checkpoint metadata.
std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& config);

/// Applies entries in two passes: n_tiers, temporal_resolution and
/// feature_dim rebuild the standard tier ladder first, then tier<k>.<field>
/// keys override single tiers. Keys that are not TrainConfig fields are
/// returned untouched. Throws ConfigError on unparsable values.
std::vector<std::pair<std::string, std::string>> apply_train_entries(
    TrainConfig& config, const std::vector<std::pair<std::string, std::string>>& entries);

bool is_train_key(const std::string& key);

struct Checkpoint {
  Model<float> model;
  TrainConfig config;
  SceneBounds bounds;
  std::uint64_t iteration = 0;
  double last_loss = 0;
  double recent_mean_loss = 0;  // mean over the last (up to) 100 iterations
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Mean squared difference between neighbouring plane cells along both grid
/// axes, summed over the given planes.
template <typename T>
BasicTensor<T> total_variation(const std::vector<BasicTensor<T>>& planes);

/// Parameters Adam updates under `config` (dynamic planes drop out when frozen).
template <typename T>
std::vector<BasicTensor<T>> trainable_parameters(const Model<T>& model, const TrainConfig& config);

/// One full-image step: render, decode, MSE (+ optional TV), backward,
/// Adam update. Returns the loss before the update. Throws NumericError
/// naming the first non-finite tensor if the loss is not finite.
template <typename T>
double train_step(const Model<T>& model, Adam<T>& adam, const CameraPose& camera, const BasicTensor<T>& target,
                  const SceneBounds& bounds, const TrainConfig& config, std::mt19937_64& rng);

struct LossRecord {
  std::size_t iteration = 0;  // 1-based
  double loss = 0;
  double wall_ms = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;
};

/// Scene bounds from the manifest with the config's near/far overrides.
SceneBounds training_bounds(const Manifest& manifest, const TrainConfig& config);

/// Trains on the train split, one frame per iteration in a seeded shuffled
/// order. With a non-empty `out_dir` writes loss_log.csv, periodic
/// checkpoint_<iter>.tkp files and the final checkpoint.tkp there.
TrainResult train(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out_dir = {});

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace tkp
