#include "fishdreamer/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fishdreamer/errors.hpp"

namespace fd {

namespace {

constexpr int kMaxNewtonIterations = 50;
constexpr double kNewtonTolerance = 1e-8;
constexpr int kValidationSamples = 8192;

}  // namespace

DistortionModel::DistortionModel(std::array<double, 4> k, Point center, double norm_radius,
                                 double max_radius)
    : k_(k), center_(center), norm_radius_(norm_radius), max_radius_(max_radius) {
  if (!(norm_radius > 0.0) || !std::isfinite(norm_radius)) {
    throw ContractError("distortion: norm_radius must be positive, got " +
                        std::to_string(norm_radius));
  }
  if (!(max_radius > 0.0) || !std::isfinite(max_radius)) {
    throw ContractError("distortion: max_radius must be positive");
  }
  for (double c : k_) {
    if (!std::isfinite(c)) throw ContractError("distortion: non-finite coefficient");
  }
  double prev = 0.0;
  for (int i = 1; i <= kValidationSamples; ++i) {
    const double r = max_radius_ * i / kValidationSamples;
    const double v = radial(r);
    if (gain(r) <= 0.0 || radial_derivative(r) <= 0.0 || v <= prev) {
      throw ContractError("distortion: r*g(r) is not strictly increasing up to r=" +
                          std::to_string(r) + " (valid range " + std::to_string(max_radius_) +
                          ")");
    }
    prev = v;
  }
}

DistortionModel DistortionModel::for_image(std::array<double, 4> k, std::size_t width,
                                           std::size_t height) {
  const Point c = frame_center(width, height);
  const double norm = 0.5 * std::hypot(static_cast<double>(width), static_cast<double>(height));
  // Farthest pixel center from c, normalized.
  const double corner = std::hypot(c.x, c.y) / norm;
  return DistortionModel(k, c, norm, std::max(corner, 1e-9));
}

double DistortionModel::gain(double r) const {
  const double r2 = r * r;
  return 1.0 + r2 * (k_[0] + r2 * (k_[1] + r2 * (k_[2] + r2 * k_[3])));
}

double DistortionModel::radial_derivative(double r) const {
  const double r2 = r * r;
  return 1.0 + r2 * (3.0 * k_[0] + r2 * (5.0 * k_[1] + r2 * (7.0 * k_[2] + r2 * 9.0 * k_[3])));
}

Point DistortionModel::distort(Point p) const {
  const double dx = p.x - center_.x;
  const double dy = p.y - center_.y;
  const double r = std::hypot(dx, dy) / norm_radius_;
  const double g = gain(r);
  return {center_.x + dx * g, center_.y + dy * g};
}

double DistortionModel::invert_radius(double r_d) const {
  if (r_d == 0.0) return 0.0;
  // Newton, kept inside [lo, hi]; the function is monotone there so the
  // bracket shrinks around the root and bisection backs up a wild step.
  double lo = 0.0;
  double hi = max_radius_;
  double r = std::min(r_d, hi);
  double residual = radial(r) - r_d;
  for (int it = 0; it < kMaxNewtonIterations; ++it) {
    if (std::abs(residual) <= kNewtonTolerance) return r;
    if (residual > 0.0) {
      hi = r;
    } else {
      lo = r;
    }
    double next = r - residual / radial_derivative(r);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    r = next;
    residual = radial(r) - r_d;
  }
  if (std::abs(residual) <= kNewtonTolerance) return r;
  throw InversionError("undistort: Newton did not converge for r_d=" + std::to_string(r_d),
                       residual);
}

bool DistortionModel::invertible(Point q) const {
  const double r_d = std::hypot(q.x - center_.x, q.y - center_.y) / norm_radius_;
  return r_d <= max_distorted_radius();
}

Point DistortionModel::undistort(Point q) const {
  const double dx = q.x - center_.x;
  const double dy = q.y - center_.y;
  const double r_d = std::hypot(dx, dy) / norm_radius_;
  if (r_d > max_distorted_radius()) {
    throw ContractError("undistort: point outside the invertible range (r_d=" +
                        std::to_string(r_d) + ")");
  }
  if (r_d == 0.0 || is_identity()) return q;
  const double s = invert_radius(r_d) / r_d;
  return {center_.x + dx * s, center_.y + dy * s};
}

Point distort_point(const DistortionModel& m, Point p) { return m.distort(p); }
Point undistort_point(const DistortionModel& m, Point q) { return m.undistort(q); }

Point frame_center(std::size_t width, std::size_t height) {
  return {(static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0};
}

namespace {

// Source position covered by pixel areas [-0.5, size - 0.5).
bool inside(double v, std::size_t size) {
  return v >= -0.5 && v < static_cast<double>(size) - 0.5;
}

std::size_t clamp_index(long v, std::size_t size) {
  if (v < 0) return 0;
  if (v >= static_cast<long>(size)) return size - 1;
  return static_cast<std::size_t>(v);
}

}  // namespace

Image warp_image(const Image& src, const DistortionModel& m, std::size_t out_width,
                 std::size_t out_height, Interp interp, std::uint8_t fill) {
  if (src.width == 0 || src.height == 0 || src.channels == 0) {
    throw ContractError("warp_image: empty source");
  }
  Image out(out_width, out_height, src.channels, fill);
  const double off_x = (static_cast<double>(src.width) - static_cast<double>(out_width)) / 2.0;
  const double off_y = (static_cast<double>(src.height) - static_cast<double>(out_height)) / 2.0;
  const std::size_t ch = src.channels;

#pragma omp parallel for schedule(static)
  for (long y = 0; y < static_cast<long>(out_height); ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      const Point q{static_cast<double>(x) + off_x, static_cast<double>(y) + off_y};
      if (!m.invertible(q)) continue;
      const Point p = m.undistort(q);
      if (!inside(p.x, src.width) || !inside(p.y, src.height)) continue;
      std::uint8_t* dst = &out.pixels[(static_cast<std::size_t>(y) * out_width + x) * ch];
      if (interp == Interp::Nearest) {
        const std::size_t sx = clamp_index(std::lround(p.x), src.width);
        const std::size_t sy = clamp_index(std::lround(p.y), src.height);
        for (std::size_t c = 0; c < ch; ++c) dst[c] = src.at(sx, sy, c);
        continue;
      }
      const double fx = std::floor(p.x);
      const double fy = std::floor(p.y);
      const double ax = p.x - fx;
      const double ay = p.y - fy;
      const std::size_t x0 = clamp_index(static_cast<long>(fx), src.width);
      const std::size_t x1 = clamp_index(static_cast<long>(fx) + 1, src.width);
      const std::size_t y0 = clamp_index(static_cast<long>(fy), src.height);
      const std::size_t y1 = clamp_index(static_cast<long>(fy) + 1, src.height);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = src.at(x0, y0, c) * (1.0 - ax) + src.at(x1, y0, c) * ax;
        const double bottom = src.at(x0, y1, c) * (1.0 - ax) + src.at(x1, y1, c) * ax;
        const double v = top * (1.0 - ay) + bottom * ay;
        dst[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

std::size_t CircularMask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v;
  return n;
}

Image CircularMask::to_image() const {
  Image img(width, height, 1);
  for (std::size_t i = 0; i < data.size(); ++i) img.pixels[i] = data[i] ? 255 : 0;
  return img;
}

CircularMask circular_mask(std::size_t width, std::size_t height, Point center,
                           double radius) {
  if (!(radius > 0.0)) throw ContractError("circular_mask: radius must be positive");
  CircularMask m{width, height, center, radius, std::vector<std::uint8_t>(width * height, 0)};
  const double r2 = radius * radius;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = static_cast<double>(x) - center.x;
      const double dy = static_cast<double>(y) - center.y;
      m.data[y * width + x] = (dx * dx + dy * dy <= r2) ? 1 : 0;
    }
  }
  return m;
}

}  // namespace fd
