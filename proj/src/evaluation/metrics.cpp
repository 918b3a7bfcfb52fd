#include "tkp/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "tkp/errors.hpp"

namespace tkp {
namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
    throw ContractError(std::string(what) + ": images differ in size (" + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                        ")");
  }
}

double region_mse(const Image& a, const Image& b, const PixelRect& r) {
  double total = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        const double d = static_cast<double>(a.at(c, y, x)) - static_cast<double>(b.at(c, y, x));
        total += d * d;
      }
    }
  }
  return total / static_cast<double>(3 * r.area());
}

}  // namespace

double psnr_from_mse(double mse) {
  if (!(mse > 0)) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const Image& reference, const Image& rendered) {
  require_same_size(reference, rendered, "psnr");
  if (reference.data.empty()) throw ContractError("psnr: empty images");
  return psnr_from_mse(region_mse(reference, rendered, {0, 0, reference.width, reference.height}));
}

PixelRect box_pixels(const Box& box, std::size_t width, std::size_t height) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  if (!(box.x_min >= 0 && box.y_min >= 0 && box.x_max <= w && box.y_max <= h && box.x_min <= box.x_max &&
        box.y_min <= box.y_max)) {
    throw ContractError("box (" + std::to_string(box.x_min) + ", " + std::to_string(box.y_min) + ", " +
                        std::to_string(box.x_max) + ", " + std::to_string(box.y_max) + ") lies outside the " +
                        std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  PixelRect r;
  r.x0 = static_cast<std::size_t>(std::floor(box.x_min));
  r.y0 = static_cast<std::size_t>(std::floor(box.y_min));
  r.x1 = static_cast<std::size_t>(std::ceil(box.x_max));
  r.y1 = static_cast<std::size_t>(std::ceil(box.y_max));
  return r;
}

std::optional<double> box_psnr(const Image& reference, const Image& rendered, const Box& box) {
  require_same_size(reference, rendered, "box_psnr");
  if (!(box.width() > 0) || !(box.height() > 0)) return std::nullopt;
  return psnr_from_mse(region_mse(reference, rendered, box_pixels(box, reference.width, reference.height)));
}

std::optional<double> dpsnr(const Image& reference, const Image& rendered, std::span<const Box> boxes) {
  require_same_size(reference, rendered, "dpsnr");
  double total = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto v = box_psnr(reference, rendered, boxes[i]);
    if (!v) {
      spdlog::warn("dpsnr: skipping zero-area box {}", i);
      continue;
    }
    total += *v;
    ++used;
  }
  if (used == 0) return std::nullopt;
  return total / static_cast<double>(used);
}

}  // namespace tkp
