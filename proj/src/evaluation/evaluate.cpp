#include "tkp/evaluate.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "tkp/errors.hpp"
#include "tkp/metrics.hpp"
#include "tkp/text_format.hpp"

namespace tkp {
namespace {

std::string num(double v) { return format_number(v); }

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, Split split,
                    const std::filesystem::path& dump_dir) {
  const auto indices = data.manifest.indices(split);
  if (indices.empty()) throw ConfigError(std::string("split '") + split_name(split) + "' has no frames");
  if (!dump_dir.empty()) std::filesystem::create_directories(dump_dir);
  const Model<float>& model = checkpoint.model;

  EvalReport report;
  report.split = split;
  double psnr_sum = 0, dpsnr_sum = 0;
  std::size_t psnr_n = 0, dpsnr_n = 0;
  for (std::size_t i : indices) {
    const FrameRecord& f = data.manifest.frames[i];
    FrameEvaluation e;
    e.frame_index = i;
    e.image_path = f.image_path;
    e.timestamp = f.timestamp();
    try {
      e.ray_count = ray_count(model.config.tiers, f.camera.width, f.camera.height);
      const auto start = std::chrono::steady_clock::now();
      const Image rendered =
          tensor_to_image(model.render(f.camera, checkpoint.bounds, checkpoint.config.samples_per_ray));
      e.render_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      e.psnr = psnr(data.images[i], rendered);
      e.dpsnr = dpsnr(data.images[i], rendered, f.boxes);
      if (!dump_dir.empty()) write_png(dump_dir / std::filesystem::path(f.image_path).filename(), rendered);
    } catch (const std::exception& ex) {
      e.error = ex.what();
      spdlog::error("frame {} ({}): {}", i, f.image_path, ex.what());
      ++report.failed;
    }
    if (e.psnr) {
      psnr_sum += *e.psnr;
      ++psnr_n;
    }
    if (e.dpsnr) {
      dpsnr_sum += *e.dpsnr;
      ++dpsnr_n;
    }
    report.frames.push_back(std::move(e));
  }
  if (psnr_n > 0) report.mean_psnr = psnr_sum / static_cast<double>(psnr_n);
  if (dpsnr_n > 0) report.mean_dpsnr = dpsnr_sum / static_cast<double>(dpsnr_n);
  return report;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "frame,image,timestamp,psnr,dpsnr,render_ms,rays,error\n";
  for (const auto& e : report.frames) {
    os << e.frame_index << ',' << csv_field(e.image_path) << ',' << num(e.timestamp) << ',' << opt(e.psnr) << ','
       << opt(e.dpsnr) << ',' << num(e.render_ms) << ',' << e.ray_count << ',' << csv_field(e.error) << '\n';
  }
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

std::string report_summary(const EvalReport& report) {
  std::ostringstream os;
  os << "split: " << split_name(report.split) << '\n';
  os << "frames: " << report.frames.size() << " (" << report.failed << " failed)\n";
  os << "mean PSNR: " << (report.mean_psnr ? num(*report.mean_psnr) + " dB" : "n/a") << '\n';
  os << "mean DPSNR: " << (report.mean_dpsnr ? num(*report.mean_dpsnr) + " dB" : "n/a") << '\n';
  if (!report.frames.empty()) os << "rays per frame: " << report.frames.front().ray_count << '\n';
  return os.str();
}

}  // namespace tkp
