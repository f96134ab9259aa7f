#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fishdreamer/image.hpp"

namespace fd {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Radial polynomial model x_d = c + (x_o - c) * g(r), with
/// g(r) = 1 + k1 r^2 + k2 r^4 + k3 r^6 + k4 r^8 and r = |x_o - c| / norm_radius.
class DistortionModel {
 public:
  /// `max_radius` is the normalized radius up to which the model must be
  /// invertible; it is validated by dense sampling.
  DistortionModel(std::array<double, 4> k, Point center, double norm_radius,
                  double max_radius = 1.0);

  /// Centered on a width x height frame, normalized by half its diagonal and
  /// validated out to the corners.
  static DistortionModel for_image(std::array<double, 4> k, std::size_t width,
                                   std::size_t height);

  const std::array<double, 4>& k() const { return k_; }
  Point center() const { return center_; }
  double norm_radius() const { return norm_radius_; }
  double max_radius() const { return max_radius_; }
  /// Largest normalized distorted radius reachable from the validated range.
  double max_distorted_radius() const { return radial(max_radius_); }

  double gain(double r) const;
  double radial(double r) const { return r * gain(r); }
  double radial_derivative(double r) const;

  Point distort(Point p) const;
  /// Throws ContractError outside the invertible range, InversionError when
  /// Newton does not converge.
  Point undistort(Point q) const;
  bool invertible(Point q) const;
  /// Normalized radius r_o with radial(r_o) == r_d.
  double invert_radius(double r_d) const;

  bool is_identity() const { return k_ == std::array<double, 4>{0, 0, 0, 0}; }

 private:
  std::array<double, 4> k_;
  Point center_;
  double norm_radius_;
  double max_radius_;
};

Point distort_point(const DistortionModel& m, Point p);
Point undistort_point(const DistortionModel& m, Point q);

enum class Interp { Bilinear, Nearest };

/// Inverse warp: each output pixel samples the source at undistort_point of its
/// own position. The output frame is aligned with the source by its center.
/// Pixels with no preimage inside the source take `fill`.
Image warp_image(const Image& src, const DistortionModel& m, std::size_t out_width,
                 std::size_t out_height, Interp interp, std::uint8_t fill = 0);

struct CircularMask {
  std::size_t width = 0;
  std::size_t height = 0;
  Point center;
  double radius = 0.0;
  std::vector<std::uint8_t> data;  // 1 inside the field of view

  std::uint8_t at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
  std::size_t count() const;
  /// Single-channel raster with 0 / 255.
  Image to_image() const;
};

/// data[p] = 1 iff |p - center| <= radius, pixel centers at integer coordinates.
CircularMask circular_mask(std::size_t width, std::size_t height, Point center, double radius);
/// Center of a frame in pixel coordinates: ((w - 1) / 2, (h - 1) / 2).
Point frame_center(std::size_t width, std::size_t height);

}  // namespace fd
