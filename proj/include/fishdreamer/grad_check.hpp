#pragma once

#include <cstddef>
#include <functional>

#include "fishdreamer/tensor.hpp"

namespace fd {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of a scalar function against central differences
/// at every coordinate of `x`. The error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// `floor` stays at 1e-8 unless a caller has a measured f32 noise level for f.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-3, double floor = 1e-8);

}  // namespace fd
