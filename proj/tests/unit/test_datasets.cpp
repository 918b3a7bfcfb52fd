#include <gtest/gtest.h>

#include <fstream>

#include "tempdir.hpp"
#include "tkp/dataset.hpp"
#include "tkp/errors.hpp"
#include "tkp/synthetic.hpp"

using namespace tkp;
using tkp::testing::TempDir;

namespace {

const char* kIdentity = "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1";

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::trunc) << s;
}

std::string header(std::size_t w = 8, std::size_t h = 6) {
  return "tkplanes-manifest 1\nintrinsics 10 10 4 3 " + std::to_string(w) + " " + std::to_string(h) + "\n";
}

std::string frame(const std::string& path, double t, const std::string& boxes = "0", const std::string& split = "",
                  const std::string& pose = kIdentity) {
  std::string s = "frame " + path + " " + pose + " " + std::to_string(t) + " " + boxes;
  if (!split.empty()) s += " " + split;
  return s + "\n";
}

ManifestOptions no_images() {
  ManifestOptions o;
  o.require_images = false;
  return o;
}

// Message of the LoadError thrown by `fn`, or "" if none.
template <typename Fn>
std::string load_error(Fn&& fn) {
  try {
    fn();
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Manifest, TimestampsNormalizeToUnitInterval) {
  TempDir dir("norm");
  write_text(dir / "m.txt", header() + frame("b.png", 20) + frame("a.png", 10) + frame("c.png", 15));
  const auto m = load_manifest(dir / "m.txt", no_images());
  ASSERT_EQ(m.frames.size(), 3u);
  EXPECT_EQ(m.frames[0].image_path, "a.png");
  EXPECT_DOUBLE_EQ(m.frames[0].timestamp(), 0.0);
  EXPECT_DOUBLE_EQ(m.frames[1].timestamp(), 0.5);
  EXPECT_DOUBLE_EQ(m.frames[2].timestamp(), 1.0);
  EXPECT_EQ(m.base_dir, dir.path());
}

TEST(Manifest, EqualTimestampsKeepFileOrder) {
  TempDir dir("ties");
  write_text(dir / "m.txt", header() + frame("z.png", 3) + frame("y.png", 1) + frame("x.png", 3));
  const auto m = load_manifest(dir / "m.txt", no_images());
  EXPECT_EQ(m.frames[1].image_path, "z.png");
  EXPECT_EQ(m.frames[2].image_path, "x.png");
  write_text(dir / "one.txt", header() + frame("only.png", 7));
  EXPECT_DOUBLE_EQ(load_manifest(dir / "one.txt", no_images()).frames[0].timestamp(), 0.0);
}

TEST(Manifest, EmptyFrameListIsAnError) {
  TempDir dir("empty");
  write_text(dir / "m.txt", header() + "# nothing\n\n");
  EXPECT_NE(load_error([&] { load_manifest(dir / "m.txt", no_images()); }).find("no frames"), std::string::npos);
  auto opts = no_images();
  opts.allow_empty = true;
  EXPECT_TRUE(load_manifest(dir / "m.txt", opts).frames.empty());
}

TEST(Manifest, BoxOutsideImageNamesTheFrame) {
  TempDir dir("box");
  write_text(dir / "m.txt", header() + frame("good.png", 0, "1 0 0 8 6") + frame("bad.png", 1, "1 2 2 9 4"));
  const auto msg = load_error([&] { load_manifest(dir / "m.txt", no_images()); });
  EXPECT_NE(msg.find("bad.png"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":4"), std::string::npos) << msg;  // line number
  write_text(dir / "inv.txt", header() + frame("flip.png", 0, "1 5 2 3 4"));
  EXPECT_NE(load_error([&] { load_manifest(dir / "inv.txt", no_images()); }).find("flip.png"), std::string::npos);
}

TEST(Manifest, MalformedPoseIsRejected) {
  TempDir dir("pose");
  write_text(dir / "row.txt", header() + frame("a.png", 0, "0", "", "1 0 0 0 0 1 0 0 0 0 1 0 0 0 1 1"));
  EXPECT_NE(load_error([&] { load_manifest(dir / "row.txt", no_images()); }).find("malformed pose matrix"),
            std::string::npos);
  write_text(dir / "rot.txt", header() + frame("a.png", 0, "0", "", "2 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1"));
  EXPECT_NE(load_error([&] { load_manifest(dir / "rot.txt", no_images()); }).find("malformed pose matrix"),
            std::string::npos);
  write_text(dir / "short.txt", header() + "frame a.png 1 0 0\n");
  EXPECT_THROW(load_manifest(dir / "short.txt", no_images()), LoadError);
}

TEST(Manifest, HeaderAndIntrinsicsChecks) {
  TempDir dir("hdr");
  write_text(dir / "a.txt", "tkplanes-manifest 2\n" + frame("a.png", 0));
  EXPECT_THROW(load_manifest(dir / "a.txt", no_images()), LoadError);
  write_text(dir / "b.txt", "tkplanes-manifest 1\n" + frame("a.png", 0));
  EXPECT_THROW(load_manifest(dir / "b.txt", no_images()), LoadError);
  write_text(dir / "c.txt", "tkplanes-manifest 1\nintrinsics 0 10 4 3 8 6\n" + frame("a.png", 0));
  EXPECT_THROW(load_manifest(dir / "c.txt", no_images()), LoadError);
  EXPECT_THROW(load_manifest(dir / "missing.txt", no_images()), LoadError);
}

TEST(Manifest, MissingImageIsReported) {
  TempDir dir("img");
  write_text(dir / "m.txt", header() + frame("absent.png", 0));
  const auto msg = load_error([&] { load_manifest(dir / "m.txt"); });
  EXPECT_NE(msg.find("absent.png"), std::string::npos) << msg;
  EXPECT_NO_THROW(load_manifest(dir / "m.txt", no_images()));
}

TEST(Manifest, SplitTagsAndFallback) {
  TempDir dir("split");
  write_text(dir / "tagged.txt", header() + frame("a.png", 0, "0", "val") + frame("b.png", 1));
  auto opts = no_images();
  opts.val_every = 2;
  const auto tagged = load_manifest(dir / "tagged.txt", opts);
  EXPECT_EQ(tagged.indices(Split::val), (std::vector<std::size_t>{0}));
  EXPECT_EQ(tagged.indices(Split::train), (std::vector<std::size_t>{1}));
  std::string s = header();
  for (int k = 0; k < 6; ++k) s += frame("f" + std::to_string(k) + ".png", k);
  write_text(dir / "plain.txt", s);
  const auto plain = load_manifest(dir / "plain.txt", opts);
  EXPECT_EQ(plain.indices(Split::val), (std::vector<std::size_t>{1, 3, 5}));
  write_text(dir / "bad.txt", header() + frame("a.png", 0, "0", "test"));
  EXPECT_THROW(load_manifest(dir / "bad.txt", no_images()), std::runtime_error);
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_THROW(parse_split("Val"), ConfigError);
}

TEST(Manifest, WriteLoadRoundTrip) {
  TempDir dir("rt");
  Manifest m;
  SceneBounds b;
  b.min = {-1.5, -2, 0};
  b.max = {1.25, 2, 0.4375};
  b.near = 1.1;
  b.far = 4.9;
  m.bounds = b;
  for (int k = 0; k < 4; ++k) {
    FrameRecord f;
    f.image_path = "frames/f" + std::to_string(k) + ".png";
    f.camera.width = 8;
    f.camera.height = 6;
    f.camera.fx = 10.3;
    f.camera.fy = 9.7;
    f.camera.cx = 4.1;
    f.camera.cy = 2.9;
    f.camera.camera_to_world = look_at({0.1 * k, -1, 3}, {0, 0, 0}, {0, 0, 1});
    f.camera.timestamp = k / 3.0;
    if (k % 2) f.boxes.push_back({0.5, 1.25, 3.0 + k, 5.5});
    f.split = k == 2 ? Split::val : Split::train;
    m.frames.push_back(f);
  }
  write_manifest(dir / "m.txt", m);
  const auto back = load_manifest(dir / "m.txt", no_images());
  ASSERT_EQ(back.frames.size(), m.frames.size());
  for (std::size_t i = 0; i < m.frames.size(); ++i) EXPECT_TRUE(back.frames[i] == m.frames[i]) << i;
  ASSERT_TRUE(back.bounds);
  EXPECT_EQ(back.bounds->min, b.min);
  EXPECT_EQ(back.bounds->max, b.max);
  EXPECT_EQ(back.bounds->near, b.near);
  EXPECT_EQ(back.bounds->far, b.far);

  m.frames[1].camera.fx = 11;
  EXPECT_THROW(write_manifest(dir / "x.txt", m), std::exception);
}

TEST(Images, PngRoundTripOfQuantizedImage) {
  TempDir dir("png");
  Image img(5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 7) / 6.0f;
  const Image q = quantize_8bit(img);
  write_png(dir / "a.png", q);
  EXPECT_EQ(read_png(dir / "a.png"), q);
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    EXPECT_NEAR(q.data[i], img.data[i], 0.5f / 255 + 1e-6f);
    EXPECT_FLOAT_EQ(q.data[i] * 255.0f, std::round(q.data[i] * 255.0f));
  }
  EXPECT_THROW(read_png(dir / "nope.png"), LoadError);
}

TEST(Images, DatasetChecksImageSize) {
  TempDir dir("size");
  write_png(dir / "a.png", Image(8, 6, 0.5f));
  write_png(dir / "b.png", Image(6, 8, 0.5f));
  write_text(dir / "ok.txt", header() + frame("a.png", 0));
  const auto ok = load_dataset(dir / "ok.txt");
  ASSERT_EQ(ok.images.size(), 1u);
  EXPECT_EQ(ok.images[0].width, 8u);
  write_text(dir / "bad.txt", header() + frame("b.png", 0));
  EXPECT_NE(load_error([&] { load_dataset(dir / "bad.txt"); }).find("b.png"), std::string::npos);
}

TEST(Synthetic, StandardSceneLayout) {
  const auto spec = SyntheticSceneSpec::standard();
  EXPECT_NO_THROW(spec.validate());
  const auto data = generate_synthetic(spec);
  const auto& frames = data.manifest.frames;
  ASSERT_EQ(frames.size(), spec.frame_count + spec.val_frames);
  EXPECT_EQ(data.manifest.indices(Split::train).size(), spec.frame_count);
  EXPECT_EQ(data.manifest.indices(Split::val).size(), spec.val_frames);
  EXPECT_DOUBLE_EQ(frames.front().timestamp(), 0.0);
  EXPECT_DOUBLE_EQ(frames.back().timestamp(), 1.0);
  for (std::size_t i = 1; i < frames.size(); ++i) EXPECT_LE(frames[i - 1].timestamp(), frames[i].timestamp());
  ASSERT_TRUE(data.manifest.bounds);
  EXPECT_NO_THROW(data.manifest.bounds->validate());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(data.images[i].width, spec.width);
    EXPECT_EQ(data.images[i], quantize_8bit(data.images[i]));
    EXPECT_FALSE(frames[i].boxes.empty());
    for (const auto& b : frames[i].boxes) {
      EXPECT_GE(b.x_min, 0.0);
      EXPECT_LE(b.x_max, static_cast<double>(spec.width));
      EXPECT_GT(b.area(), 0.0);
    }
  }
  EXPECT_GT(data.dynamic_ratio, 0.01);
  EXPECT_LT(data.dynamic_ratio, 0.2);
}

TEST(Synthetic, Deterministic) {
  auto spec = SyntheticSceneSpec::standard();
  spec.frame_count = 3;
  spec.val_frames = 1;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  EXPECT_EQ(a.images, b.images);
  spec.seed = 7;
  const auto c = generate_synthetic(spec);
  EXPECT_NE(a.images, c.images);  // seed drives the camera jitter
}

TEST(Synthetic, SpritesAreTheOnlyMovingContent) {
  auto spec = SyntheticSceneSpec::standard();
  const auto cam = spec.camera(0.3);
  const auto with = rasterize(spec, cam, 0.3, true);
  const auto without = rasterize(spec, cam, 0.3, false);
  EXPECT_EQ(without.dynamic_fraction, 0.0);
  EXPECT_GT(with.dynamic_fraction, 0.0);
  // pixels differing between the two renders lie inside some sprite box
  std::vector<Box> boxes;
  for (const auto& s : spec.sprites) {
    if (auto b = sprite_box(s, cam, 0.3)) boxes.push_back(*b);
  }
  std::size_t changed = 0;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      bool differs = false;
      for (std::size_t c = 0; c < 3; ++c) differs |= with.image.at(c, y, x) != without.image.at(c, y, x);
      if (!differs) continue;
      ++changed;
      bool covered = false;
      for (const auto& b : boxes) {
        covered |= x + 1 > b.x_min && x < b.x_max && y + 1 > b.y_min && y < b.y_max;
      }
      EXPECT_TRUE(covered) << x << "," << y;
    }
  }
  EXPECT_GT(changed, 0u);
}

TEST(Synthetic, SpriteMotion) {
  SpriteSpec lin;
  lin.trajectory = TrajectoryKind::linear;
  lin.start = {-1, 0};
  lin.end = {1, 2};
  EXPECT_TRUE(lin.position(0.5).isApprox(Eigen::Vector2d(0, 1)));
  SpriteSpec circ;
  circ.trajectory = TrajectoryKind::circular;
  circ.center = {0.5, 0};
  circ.radius = 0.25;
  for (double t : {0.0, 0.3, 0.8}) EXPECT_NEAR((circ.position(t) - circ.center).norm(), 0.25, 1e-12);
}

TEST(Synthetic, ConfigRoundTripAndErrors) {
  auto spec = SyntheticSceneSpec::standard();
  spec.altitude = 2.75;
  spec.sprites[1].radius = 0.3;
  auto back = SyntheticSceneSpec::standard();
  back.sprites.clear();
  const auto unknown = apply_scene_entries(back, scene_spec_entries(spec));
  EXPECT_TRUE(unknown.empty());
  EXPECT_EQ(scene_spec_entries(back), scene_spec_entries(spec));

  auto s2 = SyntheticSceneSpec::standard();
  EXPECT_EQ(apply_scene_entries(s2, {{"learning_rate", "1"}}).size(), 1u);
  EXPECT_THROW(apply_scene_entries(s2, {{"altitude", "high"}}), ConfigError);
  EXPECT_TRUE(is_scene_key("sprite0.radius"));
  EXPECT_FALSE(is_scene_key("sprite.radius"));
  auto far = SyntheticSceneSpec::standard();
  far.sprites[0].end = {5, 0};
  EXPECT_THROW(far.validate(), ConfigError);
}

TEST(Synthetic, WriteDatasetLoadsBack) {
  TempDir dir("synth");
  auto spec = SyntheticSceneSpec::standard();
  spec.frame_count = 4;
  spec.val_frames = 1;
  const auto data = generate_synthetic(spec);
  const auto path = write_dataset(data, dir.path());
  const auto loaded = load_dataset(path);
  ASSERT_EQ(loaded.images.size(), data.images.size());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    EXPECT_EQ(loaded.images[i], data.images[i]);
    EXPECT_TRUE(loaded.manifest.frames[i] == data.manifest.frames[i]);
  }
}

TEST(Synthetic, NoSpritesFixedCameraIsStatic) {
  auto spec = SyntheticSceneSpec::standard();
  spec.sprites.clear();
  spec.jitter_amplitude = 0;
  spec.frame_count = 5;
  spec.val_frames = 2;
  spec.width = spec.height = 24;
  const auto data = generate_synthetic(spec);
  EXPECT_EQ(data.dynamic_ratio, 0.0);
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    EXPECT_TRUE(data.manifest.frames[i].boxes.empty());
    EXPECT_EQ(data.images[i].data, data.images[0].data) << "frame " << i;
  }
}

TEST(Synthetic, LinearSpriteBoxCentersMoveMonotonically) {
  auto spec = SyntheticSceneSpec::standard();
  spec.sprites.resize(1);
  spec.jitter_amplitude = 0;
  spec.frame_count = 12;
  spec.val_frames = 0;
  const auto& s = spec.sprites[0];
  const auto cam = spec.camera(0);
  // projected endpoints of the sprite's center line fix the direction of travel
  auto ground = [&](double t) {
    const auto p = s.position(t);
    return cam.project(Eigen::Vector3d(p.x(), p.y(), 0.5 * s.size));
  };
  const Eigen::Vector3d a = ground(0), b = ground(1);
  const Eigen::Vector2d dir = (b.head<2>() - a.head<2>()).normalized();
  const auto data = generate_synthetic(spec);
  double prev = -1e9;
  for (const auto& f : data.manifest.frames) {
    ASSERT_EQ(f.boxes.size(), 1u);
    const Eigen::Vector2d c(0.5 * (f.boxes[0].x_min + f.boxes[0].x_max), 0.5 * (f.boxes[0].y_min + f.boxes[0].y_max));
    const double along = c.dot(dir);
    EXPECT_GT(along, prev) << "t = " << f.camera.timestamp;
    prev = along;
  }
}
