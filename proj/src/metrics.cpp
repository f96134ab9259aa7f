#include "fishdreamer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fishdreamer/errors.hpp"

namespace fd {

namespace {

void require_same(const Image& a, const Image& b, const char* op) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DimensionError(std::string(op) + ": images differ in size or channels");
  }
}

void require_region(Region region, std::size_t pixels, const char* op) {
  if (!region.empty() && region.size() != pixels) {
    throw DimensionError(std::string(op) + ": region has " + std::to_string(region.size()) +
                         " entries for " + std::to_string(pixels) + " pixels");
  }
}

bool scored(Region region, std::size_t p) { return region.empty() || region[p] != 0; }

}  // namespace

double psnr(const Image& pred, const Image& gt, double peak, Region region) {
  require_same(pred, gt, "psnr");
  const std::size_t pixels = pred.width * pred.height;
  require_region(region, pixels, "psnr");
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!scored(region, p)) continue;
    for (std::size_t c = 0; c < pred.channels; ++c) {
      const double d = double(pred.pixels[p * pred.channels + c]) - gt.pixels[p * gt.channels + c];
      se += d * d;
    }
    n += pred.channels;
  }
  if (n == 0) throw ContractError("psnr: no pixels scored");
  if (se == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / (se / static_cast<double>(n))));
}

std::vector<double> luma(const Image& img) {
  const std::size_t pixels = img.width * img.height;
  std::vector<double> y(pixels);
  if (img.channels == 1) {
    for (std::size_t p = 0; p < pixels; ++p) y[p] = img.pixels[p];
    return y;
  }
  if (img.channels != 3) throw ContractError("luma: expected 1 or 3 channels");
  for (std::size_t p = 0; p < pixels; ++p) {
    y[p] = 0.299 * img.pixels[3 * p] + 0.587 * img.pixels[3 * p + 1] + 0.114 * img.pixels[3 * p + 2];
  }
  return y;
}

double ssim(const Image& pred, const Image& gt, const SsimOptions& opt, Region region) {
  require_same(pred, gt, "ssim");
  const std::size_t w = pred.width, h = pred.height, win = opt.window;
  if (win == 0 || w < win || h < win) {
    throw ContractError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                        " smaller than the " + std::to_string(win) + "px window");
  }
  require_region(region, w * h, "ssim");
  std::vector<double> g(win);
  double gs = 0.0;
  const double mid = static_cast<double>(win - 1) / 2.0;
  for (std::size_t i = 0; i < win; ++i) {
    const double d = static_cast<double>(i) - mid;
    gs += g[i] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
  }
  for (auto& v : g) v /= gs;

  const auto a = luma(pred);
  const auto b = luma(gt);
  const std::size_t ow = w - win + 1, oh = h - win + 1;
  // Separable 'valid' filtering of x, y, x^2, y^2, xy.
  auto filter = [&](auto&& value) {
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < win; ++k) s += g[k] * value(y * w + x + k);
        rows[y * ow + x] = s;
      }
    }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < win; ++k) s += g[k] * rows[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    }
    return out;
  };
  const auto mx = filter([&](std::size_t i) { return a[i]; });
  const auto my = filter([&](std::size_t i) { return b[i]; });
  const auto xx = filter([&](std::size_t i) { return a[i] * a[i]; });
  const auto yy = filter([&](std::size_t i) { return b[i] * b[i]; });
  const auto xy = filter([&](std::size_t i) { return a[i] * b[i]; });

  const double c1 = std::pow(opt.k1 * opt.peak, 2);
  const double c2 = std::pow(opt.k2 * opt.peak, 2);
  const std::size_t half = win / 2;
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      if (!scored(region, (y + half) * w + x + half)) continue;
      const std::size_t i = y * ow + x;
      const double vx = xx[i] - mx[i] * mx[i];
      const double vy = yy[i] - my[i] * my[i];
      const double cov = xy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      ++n;
    }
  }
  if (n == 0) throw ContractError("ssim: no window centers scored");
  return total / static_cast<double>(n);
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::int32_t ignore_index)
    : k_(classes), ignore_(ignore_index), counts_(classes * classes, 0) {
  if (classes == 0) throw ContractError("confusion matrix: zero classes");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                          Region region) {
  if (pred.size() != gt.size()) {
    throw DimensionError("confusion matrix: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(gt.size()) + " labels");
  }
  require_region(region, gt.size(), "confusion matrix");
  for (std::size_t p = 0; p < gt.size(); ++p) {
    if (!scored(region, p)) continue;
    const int g = gt[p];
    const int q = pred[p];
    if (g == ignore_ || q == ignore_) continue;
    if (g >= static_cast<int>(k_) || q >= static_cast<int>(k_)) {
      throw ContractError("confusion matrix: label " + std::to_string(std::max(g, q)) +
                          " at pixel " + std::to_string(p) + " is not below " + std::to_string(k_));
    }
    ++counts_[g * k_ + q];
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::optional<double> ConfusionMatrix::iou(std::size_t c) const {
  std::uint64_t tp = at(c, c), fp = 0, fn = 0;
  for (std::size_t j = 0; j < k_; ++j) {
    if (j == c) continue;
    fn += at(c, j);
    fp += at(j, c);
  }
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    if (auto v = iou(c)) {
      sum += *v;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

MiouResult miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                std::size_t classes, std::int32_t ignore_index, Region region) {
  ConfusionMatrix cm(classes, ignore_index);
  cm.add(pred, gt, region);
  MiouResult r;
  for (std::size_t c = 0; c < classes; ++c) r.per_class.push_back(cm.iou(c));
  r.miou = cm.miou();
  return r;
}

}  // namespace fd
