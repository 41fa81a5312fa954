#pragma once

#include <cmath>
#include <functional>

#include "splatworld/common.hpp"

namespace splatworld {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of an analytic gradient. The step is scaled by the
// coordinate magnitude; relative error uses a small floor so exact zeros do
// not blow up against finite-difference noise.
inline GradCheckResult grad_check(const std::function<double(const VecX<double>&)>& f,
                                  const VecX<double>& analytic_grad, const VecX<double>& point,
                                  double step = 1e-5) {
  GradCheckResult result;
  VecX<double> x = point;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = int(i);
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace splatworld
