#include <gtest/gtest.h>

#include <fstream>

#include "gradcheck.hpp"
#include "tempdir.hpp"
#include "tkp/errors.hpp"
#include "tkp/synthetic.hpp"
#include "tkp/train.hpp"

using namespace tkp;
using tkp::testing::TempDir;

namespace {

// 32x32 scene: tier maps 2x2 and 4x4.
const Dataset& small_data() {
  static const Dataset data = [] {
    auto spec = SyntheticSceneSpec::standard();
    spec.width = spec.height = 32;
    spec.frame_count = 4;
    spec.val_frames = 1;
    spec.supersample = 1;
    const auto s = generate_synthetic(spec);
    return Dataset{s.manifest, s.images};
  }();
  return data;
}

TrainConfig small_config(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.samples_per_ray = 6;
  c.tiers = TierConfig::standard(2, 4, 4);
  c.learning_rate = 5e-3;
  return c;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const Model<T>& m) {
  std::vector<std::vector<T>> out;
  for (const auto& [name, t] : m.named_parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

template <typename T>
bool any_nonzero_grad(const std::vector<BasicTensor<T>>& params) {
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (g != T(0)) return true;
    }
  }
  return false;
}

ModelConfig model_config_for(const TrainConfig& c) {
  ModelConfig mc;
  mc.tiers = c.tiers;
  mc.image_width = mc.image_height = 32;
  mc.final_convs = c.final_convs;
  return mc;
}

}  // namespace

TEST(TotalVariation, KnownValueAndZeroOnConstant) {
  const Tensor64 p({1, 2, 2}, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(total_variation<double>({p}).item(), 2.5);
  EXPECT_DOUBLE_EQ(total_variation<double>({Tensor64::full({3, 4, 5}, 0.7)}).item(), 0.0);
  EXPECT_DOUBLE_EQ(total_variation<double>({p, p}).item(), 5.0);
  EXPECT_THROW(total_variation<double>({Tensor64::zeros({4, 4})}), DimensionError);
}

TEST(TotalVariation, Gradcheck) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> a(2 * 3 * 4), b(1 * 5 * 2);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  Tensor64 pa({2, 3, 4}, a, true), pb({1, 5, 2}, b, true);
  const auto r = tkp::testing::gradcheck({pa, pb}, [&] { return total_variation<double>({pa, pb}); }, 30);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(TrainConfigTest, RoundTripThroughEntries) {
  TrainConfig c;
  c.learning_rate = 0.0025;
  c.iterations = 77;
  c.tiers = TierConfig::standard(3, 12, 8);
  c.tiers.tiers[2].output_width = 3;
  c.near = 0.75;
  c.tv_weight = 1e-4;
  c.cosine_decay = true;
  c.freeze_dynamic = true;
  TrainConfig back;
  EXPECT_TRUE(apply_train_entries(back, train_config_entries(c)).empty());
  EXPECT_EQ(train_config_entries(back), train_config_entries(c));
  EXPECT_EQ(back.tiers.tiers.size(), 3u);
  EXPECT_EQ(back.tiers.tiers[2].output_width, 3u);
  ASSERT_TRUE(back.near);
  EXPECT_EQ(*back.near, 0.75);
  EXPECT_FALSE(back.far);
}

TEST(TrainConfigTest, LadderKeysApplyBeforeTierOverrides) {
  TrainConfig c;
  // override listed first still wins over the ladder rebuild
  apply_train_entries(c, {{"tier1.feature_dim", "8"}, {"n_tiers", "2"}, {"feature_dim", "12"}});
  EXPECT_EQ(c.tiers.tiers[0].feature_dim, 12u);
  EXPECT_EQ(c.tiers.tiers[1].feature_dim, 8u);
  const auto rest = apply_train_entries(c, {{"altitude", "3"}, {"seed", "5"}});
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].first, "altitude");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_THROW(apply_train_entries(c, {{"learning_rate", "fast"}}), ConfigError);
  EXPECT_THROW(apply_train_entries(c, {{"tier7.feature_dim", "4"}}), ConfigError);
  EXPECT_TRUE(is_train_key("tier0.spatial_resolution"));
  EXPECT_FALSE(is_train_key("sprite0.radius"));
}

TEST(TrainConfigTest, ValidateRejectsBadValues) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.samples_per_ray = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.near = 2;
  c.far = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.tv_weight = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Training, ZeroLossIsAFixedPoint) {
  auto config = small_config(1);
  config.jitter = false;
  const auto& data = small_data();
  const auto bounds = training_bounds(data.manifest, config);
  const auto model = Model<double>::init(model_config_for(config), 3);
  const auto& cam = data.manifest.frames[0].camera;
  const Tensor64 rendered = model.render(cam, bounds, config.samples_per_ray);
  const Tensor64 target(rendered.shape(), std::vector<double>(rendered.values().begin(), rendered.values().end()));
  const auto before = snapshot(model);
  Adam<double> adam(trainable_parameters(model, config), {1e-2});
  std::mt19937_64 rng(0);
  EXPECT_EQ(train_step(model, adam, cam, target, bounds, config, rng), 0.0);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Training, EveryParameterGroupReceivesGradient) {
  const auto config = small_config(10);
  const auto& data = small_data();
  const auto bounds = training_bounds(data.manifest, config);
  const auto model = Model<float>::init(model_config_for(config), 4);
  Adam<float> adam(trainable_parameters(model, config), {config.learning_rate});
  const auto train_idx = data.manifest.indices(Split::train);
  bool seen[4] = {false, false, false, false};
  std::mt19937_64 rng(1);
  for (std::size_t it = 0; it < 10; ++it) {
    const std::size_t f = train_idx[it % train_idx.size()];
    const auto& cam = data.manifest.frames[f].camera;
    const auto loss = mse_loss(model.render(cam, bounds, config.samples_per_ray, &rng),
                               image_to_tensor<float>(data.images[f]));
    backward(loss);
    seen[0] |= any_nonzero_grad(model.static_plane_params());
    seen[1] |= any_nonzero_grad(model.dynamic_plane_params());
    seen[2] |= any_nonzero_grad(model.head_params());
    seen[3] |= any_nonzero_grad(model.decoder_params());
    adam.step();
  }
  EXPECT_TRUE(seen[0]) << "static planes";
  EXPECT_TRUE(seen[1]) << "dynamic planes";
  EXPECT_TRUE(seen[2]) << "heads";
  EXPECT_TRUE(seen[3]) << "decoder";
}

TEST(Training, FreezeKeepsDynamicPlanesFixed) {
  auto config = small_config(6);
  config.freeze_dynamic = true;
  const auto result = train(small_data(), config);
  const auto fresh = Model<float>::init(result.checkpoint.model.config, config.seed);
  const auto a = result.checkpoint.model.dynamic_plane_params(), b = fresh.dynamic_plane_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin()));
  }
  const auto sa = result.checkpoint.model.static_plane_params(), sb = fresh.static_plane_params();
  EXPECT_FALSE(std::equal(sa[0].values().begin(), sa[0].values().end(), sb[0].values().begin()));
  EXPECT_EQ(trainable_parameters(fresh, config).size(),
            fresh.named_parameters().size() - fresh.dynamic_plane_params().size());
}

TEST(Training, SingleIterationWritesOutputs) {
  TempDir dir("one");
  const auto result = train(small_data(), small_config(1), dir.path());
  ASSERT_EQ(result.log.size(), 1u);
  EXPECT_EQ(result.log[0].iteration, 1u);
  EXPECT_EQ(result.checkpoint.iteration, 1u);
  EXPECT_EQ(result.checkpoint.last_loss, result.log[0].loss);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint.tkp"));
  std::ifstream log(dir / "loss_log.csv");
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "iteration,loss,wall_ms");
  std::size_t rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 1u);
}

TEST(Training, PeriodicCheckpoints) {
  TempDir dir("periodic");
  auto config = small_config(5);
  config.checkpoint_interval = 2;
  train(small_data(), config, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_2.tkp"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_4.tkp"));
  EXPECT_FALSE(std::filesystem::exists(dir / "checkpoint_5.tkp"));
  EXPECT_EQ(load_checkpoint(dir / "checkpoint_4.tkp").iteration, 4u);
  EXPECT_EQ(load_checkpoint(dir / "checkpoint.tkp").iteration, 5u);
}

TEST(Training, SameSeedSameResult) {
  const auto config = small_config(8);
  const auto a = train(small_data(), config), b = train(small_data(), config);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  EXPECT_EQ(snapshot(a.checkpoint.model), snapshot(b.checkpoint.model));
  auto other = config;
  other.seed = 43;
  EXPECT_NE(snapshot(train(small_data(), other).checkpoint.model), snapshot(a.checkpoint.model));
}

TEST(Training, LossDecreases) {
  const auto result = train(small_data(), small_config(120));
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += result.log[i].loss;
    last += result.log[result.log.size() - 1 - i].loss;
  }
  EXPECT_LT(last, 0.7 * first);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  TempDir dir("ckpt");
  auto config = small_config(3);
  config.tv_weight = 1e-3;
  config.far = 6.5;
  const auto result = train(small_data(), config);
  save_checkpoint(dir / "c.tkp", result.checkpoint);
  const auto back = load_checkpoint(dir / "c.tkp");
  EXPECT_EQ(snapshot(back.model), snapshot(result.checkpoint.model));
  EXPECT_EQ(train_config_entries(back.config), train_config_entries(config));
  EXPECT_EQ(back.iteration, 3u);
  EXPECT_EQ(back.last_loss, result.checkpoint.last_loss);
  EXPECT_EQ(back.recent_mean_loss, result.checkpoint.recent_mean_loss);
  EXPECT_EQ(back.bounds.min, result.checkpoint.bounds.min);
  EXPECT_EQ(back.bounds.far, 6.5);
  const auto& cam = small_data().manifest.frames[2].camera;
  const auto x = back.model.render(cam, back.bounds, 6), y = result.checkpoint.model.render(cam, back.bounds, 6);
  EXPECT_TRUE(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
}

TEST(Checkpoint, LoadErrors) {
  TempDir dir("bad");
  EXPECT_THROW(load_checkpoint(dir / "missing.tkp"), LoadError);
  std::ofstream(dir / "junk.tkp") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.tkp"), LoadError);
}

TEST(Training, ErrorsOnBadInputs) {
  auto data = small_data();
  data.manifest.bounds.reset();
  EXPECT_THROW(train(data, small_config(1)), ConfigError);
  auto all_val = small_data();
  for (auto& f : all_val.manifest.frames) f.split = Split::val;
  EXPECT_THROW(train(all_val, small_config(1)), ConfigError);
  auto bad = small_config(1);
  bad.near = 50;
  EXPECT_THROW(train(small_data(), bad), std::exception);
}

TEST(Training, NonFiniteLossNamesTensor) {
  auto config = small_config(1);
  const auto& data = small_data();
  const auto bounds = training_bounds(data.manifest, config);
  const auto model = Model<float>::init(model_config_for(config), 5);
  auto w = model.decoder.final_block.to_rgb.bias;
  w.mutable_values()[0] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> adam(trainable_parameters(model, config), {1e-3});
  std::mt19937_64 rng(0);
  try {
    train_step(model, adam, data.manifest.frames[0].camera, image_to_tensor<float>(data.images[0]), bounds, config,
               rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("first non-finite"), std::string::npos) << e.what();
  }
}

TEST(Training, EarlyStepsLowerTheLossOnTheirFrame) {
  auto config = small_config(40);
  config.learning_rate = 1e-3;
  config.jitter = false;
  const auto& data = small_data();
  const auto bounds = training_bounds(data.manifest, config);
  const auto model = Model<float>::init(model_config_for(config), config.seed);
  Adam<float> adam(trainable_parameters(model, config), {config.learning_rate});
  const auto train_idx = data.manifest.indices(Split::train);
  std::mt19937_64 rng(0);
  std::size_t improved = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const std::size_t f = train_idx[it % train_idx.size()];
    const auto& cam = data.manifest.frames[f].camera;
    const auto target = image_to_tensor<float>(data.images[f]);
    const double before = train_step(model, adam, cam, target, bounds, config, rng);
    const double after = mse_loss(model.render(cam, bounds, config.samples_per_ray), target).item();
    improved += after < before;
  }
  EXPECT_GE(improved, 36u) << improved << " of 40";
}
