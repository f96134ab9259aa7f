#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fishdreamer/image.hpp"

namespace fd {

/// Reported PSNR for identical images.
inline constexpr double kPsnrCap = 99.0;

/// Optional per-pixel selection (width * height entries, nonzero = scored).
using Region = std::span<const std::uint8_t>;

/// 10 log10(peak^2 / MSE) over all channels of the scored pixels.
double psnr(const Image& pred, const Image& gt, double peak = 255.0, Region region = {});

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 255.0;
};

/// Rec.601 luma of a 1- or 3-channel image, in [0, 255].
std::vector<double> luma(const Image& img);

/// Gaussian-windowed SSIM of the luma planes, averaged over every window
/// position that fits inside the image (and, with a region, whose center is
/// scored).
double ssim(const Image& pred, const Image& gt, const SsimOptions& opt = {}, Region region = {});

/// Counts [gt][pred] over pixels whose labels are not ignore_index.
class ConfusionMatrix {
 public:
  ConfusionMatrix(std::size_t classes, std::int32_t ignore_index = -1);
  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, Region region = {});
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;
  std::size_t classes() const { return k_; }
  /// Empty when the class appears in neither prediction nor ground truth.
  std::optional<double> iou(std::size_t c) const;
  /// Mean over classes with a defined IoU; 0 when none is defined.
  double miou() const;

 private:
  std::size_t k_;
  std::int32_t ignore_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;
};

MiouResult miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                std::size_t classes, std::int32_t ignore_index = -1, Region region = {});

}  // namespace fd
