#pragma once

#include <optional>
#include <span>

#include "tkp/dataset.hpp"
#include "tkp/image.hpp"

namespace tkp {

/// Reported instead of +inf when two images are identical.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse), capped at kPsnrCap.
double psnr_from_mse(double mse);

/// Full-frame PSNR with MAX = 1. Throws ContractError on size mismatch.
double psnr(const Image& reference, const Image& rendered);

/// Integer pixel range covered by a box: columns [floor(x_min), ceil(x_max)),
/// rows likewise.
struct PixelRect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
};
PixelRect box_pixels(const Box& box, std::size_t width, std::size_t height);

/// PSNR over the box's pixels; nullopt for a zero-area box.
std::optional<double> box_psnr(const Image& reference, const Image& rendered, const Box& box);

/// Mean of per-box PSNRs. nullopt when there are no boxes or every box is
/// degenerate; degenerate boxes are skipped with a warning.
std::optional<double> dpsnr(const Image& reference, const Image& rendered, std::span<const Box> boxes);

}  // namespace tkp
