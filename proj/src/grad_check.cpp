#include "fishdreamer/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fishdreamer/errors.hpp"

namespace fd {

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double floor) {
  if (!(h > 0.0)) throw ContractError("grad_check: step must be positive");
  Tensor probe = x.detach();
  probe.set_requires_grad(true);
  std::vector<double> analytic(probe.numel(), 0.0);
  {
    Tape tape;
    GradScope scope(tape);
    Tensor y = f(probe);
    if (y.numel() != 1) {
      throw ContractError("grad_check: function output " + shape_str(y.shape()) + " is not scalar");
    }
    tape.backward(y);
    if (probe.has_grad()) {
      auto g = probe.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
  }

  NoGradScope no_grad;
  GradCheckReport report;
  std::vector<float> base(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<float> plus = base;
    std::vector<float> minus = base;
    plus[i] = static_cast<float>(base[i] + h);
    minus[i] = static_cast<float>(base[i] - h);
    // The realized step differs from 2h by f32 rounding of the coordinate.
    const double step = static_cast<double>(plus[i]) - static_cast<double>(minus[i]);
    const double fp = f(Tensor(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor(x.shape(), std::move(minus))).item();
    const double numeric = (fp - fm) / step;
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double err = std::abs(a - numeric) / denom;
    if (i == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace fd
