#include "tkp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tkp/errors.hpp"
#include "tkp/text_format.hpp"

namespace tkp {
namespace {

constexpr const char* kHeader = "tkplanes-manifest";
constexpr int kFormatVersion = 1;

class LineReader {
 public:
  LineReader(std::string line, std::size_t number, const std::filesystem::path& file)
      : in_(std::move(line)), number_(number), file_(file) {}

  std::string word(const char* what) {
    std::string s;
    if (!(in_ >> s)) fail(std::string("missing ") + what);
    return s;
  }

  double number(const char* what) {
    const std::string s = word(what);
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(std::string("bad ") + what + " '" + s + "'");
    return v;
  }

  std::size_t count(const char* what) {
    const double v = number(what);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) fail(std::string("bad ") + what);
    return static_cast<std::size_t>(v);
  }

  std::optional<std::string> optional_word() {
    std::string s;
    if (in_ >> s) return s;
    return std::nullopt;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw LoadError(file_.string() + ":" + std::to_string(number_) + ": " + msg);
  }

 private:
  std::istringstream in_;
  std::size_t number_;
  const std::filesystem::path& file_;
};

struct RawFrame {
  FrameRecord record;
  double raw_time = 0;
  bool has_split = false;
  std::size_t line = 0;
};

}  // namespace

const char* split_name(Split s) { return s == Split::train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw ConfigError("unknown split '" + s + "' (expected train or val)");
}

bool FrameRecord::operator==(const FrameRecord& other) const {
  return image_path == other.image_path && camera.fx == other.camera.fx && camera.fy == other.camera.fy &&
         camera.cx == other.camera.cx && camera.cy == other.camera.cy && camera.width == other.camera.width &&
         camera.height == other.camera.height && camera.timestamp == other.camera.timestamp &&
         camera.camera_to_world == other.camera.camera_to_world && boxes == other.boxes && split == other.split;
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].split == split) out.push_back(i);
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());

  Manifest manifest;
  manifest.base_dir = path.parent_path();
  std::optional<CameraPose> intrinsics;
  std::vector<RawFrame> raw;
  bool seen_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    LineReader r(line, line_no, path);
    const std::string tag = r.word("record tag");
    if (!seen_header) {
      if (tag != kHeader) r.fail("expected '" + std::string(kHeader) + "' header");
      const double version = r.number("format version");
      if (version != kFormatVersion) r.fail("unsupported manifest version");
      seen_header = true;
    } else if (tag == "intrinsics") {
      CameraPose c;
      c.fx = r.number("fx");
      c.fy = r.number("fy");
      c.cx = r.number("cx");
      c.cy = r.number("cy");
      c.width = r.count("width");
      c.height = r.count("height");
      if (!(c.fx > 0) || !(c.fy > 0) || c.width == 0 || c.height == 0) r.fail("intrinsics must be positive");
      intrinsics = c;
    } else if (tag == "bounds") {
      SceneBounds b;
      for (int i = 0; i < 3; ++i) b.min[i] = r.number("bounds min");
      for (int i = 0; i < 3; ++i) b.max[i] = r.number("bounds max");
      b.near = r.number("near");
      b.far = r.number("far");
      try {
        b.validate();
      } catch (const ContractError& e) {
        r.fail(e.what());
      }
      manifest.bounds = b;
    } else if (tag == "frame") {
      if (!intrinsics) r.fail("frame before intrinsics");
      RawFrame f;
      f.line = line_no;
      f.record.camera = *intrinsics;
      f.record.image_path = r.word("image path");
      const std::string who = "frame '" + f.record.image_path + "'";
      for (int i = 0; i < 16; ++i) f.record.camera.camera_to_world(i / 4, i % 4) = r.number("pose value");
      f.raw_time = r.number("timestamp");
      const std::size_t n_boxes = r.count("box count");
      for (std::size_t b = 0; b < n_boxes; ++b) {
        Box box;
        box.x_min = r.number("box x_min");
        box.y_min = r.number("box y_min");
        box.x_max = r.number("box x_max");
        box.y_max = r.number("box y_max");
        const double w = static_cast<double>(intrinsics->width), h = static_cast<double>(intrinsics->height);
        if (!(box.x_min >= 0 && box.x_min <= box.x_max && box.x_max <= w && box.y_min >= 0 &&
              box.y_min <= box.y_max && box.y_max <= h)) {
          r.fail(who + ": box " + std::to_string(b) + " lies outside the " + std::to_string(intrinsics->width) + "x" +
                 std::to_string(intrinsics->height) + " image");
        }
        f.record.boxes.push_back(box);
      }
      if (auto split = r.optional_word()) {
        try {
          f.record.split = parse_split(*split);
        } catch (const ConfigError& e) {
          r.fail(who + ": " + e.what());
        }
        f.has_split = true;
      }
      if (r.optional_word()) r.fail(who + ": trailing tokens");
      const Eigen::RowVector4d last_row = f.record.camera.camera_to_world.row(3);
      if ((last_row - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
        r.fail(who + ": malformed pose matrix (last row must be 0 0 0 1)");
      }
      try {
        f.record.camera.validate();
      } catch (const ContractError& e) {
        r.fail(who + ": malformed pose matrix (" + e.what() + ")");
      }
      if (options.require_images && !std::filesystem::exists(manifest.base_dir / f.record.image_path)) {
        r.fail(who + ": image file not found");
      }
      raw.push_back(std::move(f));
    } else {
      r.fail("unknown record '" + tag + "'");
    }
  }
  if (!seen_header) throw LoadError(path.string() + ": empty manifest");
  if (raw.empty() && !options.allow_empty) throw LoadError(path.string() + ": manifest lists no frames");

  if (raw.empty()) return manifest;
  std::stable_sort(raw.begin(), raw.end(), [](const RawFrame& a, const RawFrame& b) { return a.raw_time < b.raw_time; });
  const double t0 = raw.front().raw_time;
  const double t1 = raw.back().raw_time;
  const bool any_split = std::any_of(raw.begin(), raw.end(), [](const RawFrame& f) { return f.has_split; });
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& rec = raw[i].record;
    double t = raw[i].raw_time;
    if (options.normalize_time) t = t1 > t0 ? (t - t0) / (t1 - t0) : 0.0;
    rec.camera.timestamp = t;
    if (!any_split && options.val_every > 0) {
      rec.split = (i % options.val_every == options.val_every - 1) ? Split::val : Split::train;
    }
    manifest.frames.push_back(std::move(rec));
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  if (manifest.frames.empty()) throw ContractError("write_manifest: no frames");
  const CameraPose& c0 = manifest.frames.front().camera;
  for (const auto& f : manifest.frames) {
    const auto& c = f.camera;
    if (c.fx != c0.fx || c.fy != c0.fy || c.cx != c0.cx || c.cy != c0.cy || c.width != c0.width ||
        c.height != c0.height) {
      throw ContractError("write_manifest: frame '" + f.image_path + "' has different intrinsics");
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << kHeader << ' ' << kFormatVersion << '\n';
  os << "intrinsics " << format_number(c0.fx) << ' ' << format_number(c0.fy) << ' ' << format_number(c0.cx) << ' '
     << format_number(c0.cy) << ' ' << c0.width << ' ' << c0.height << '\n';
  if (manifest.bounds) {
    const auto& b = *manifest.bounds;
    os << "bounds";
    for (int i = 0; i < 3; ++i) os << ' ' << format_number(b.min[i]);
    for (int i = 0; i < 3; ++i) os << ' ' << format_number(b.max[i]);
    os << ' ' << format_number(b.near) << ' ' << format_number(b.far) << '\n';
  }
  for (const auto& f : manifest.frames) {
    os << "frame " << f.image_path;
    for (int i = 0; i < 16; ++i) os << ' ' << format_number(f.camera.camera_to_world(i / 4, i % 4));
    os << ' ' << format_number(f.camera.timestamp) << ' ' << f.boxes.size();
    for (const auto& b : f.boxes) {
      os << ' ' << format_number(b.x_min) << ' ' << format_number(b.y_min) << ' ' << format_number(b.x_max) << ' '
         << format_number(b.y_max);
    }
    os << ' ' << split_name(f.split) << '\n';
  }
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const ManifestOptions& options) {
  Dataset d;
  d.manifest = load_manifest(manifest_path, options);
  d.images.reserve(d.manifest.frames.size());
  for (const auto& f : d.manifest.frames) {
    Image img = read_png(d.manifest.image_file(f));
    if (img.width != f.camera.width || img.height != f.camera.height) {
      throw LoadError("frame '" + f.image_path + "': image is " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + ", intrinsics say " + std::to_string(f.camera.width) + "x" +
                      std::to_string(f.camera.height));
    }
    d.images.push_back(std::move(img));
  }
  return d;
}

}  // namespace tkp
