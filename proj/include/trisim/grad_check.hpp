#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace trisim {

// A scalar-valued differentiable function of a flat point, bundled with its
// analytic gradient. Both callables must be pure and deterministic. When
// value_hp is set, the central differences evaluate it in extended precision;
// the plain-double difference has an absolute noise floor of roughly
// ulp(f)/(2*step), which swamps coordinates whose true gradient is near zero.
struct DiffFunction {
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> gradient;
  std::function<long double(const std::vector<long double>&)> value_hp;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool finite = true;
};

// Central finite differences against the analytic gradient. Relative error per
// coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradCheckResult grad_check(const DiffFunction& f, std::vector<double> point,
                                  double step = 1e-5) {
  GradCheckResult res;
  const std::vector<double> analytic = f.gradient(point);
  std::vector<long double> hp_point;
  if (f.value_hp) hp_point.assign(point.begin(), point.end());
  for (std::size_t i = 0; i < point.size(); ++i) {
    double numeric;
    if (f.value_hp) {
      const long double saved = hp_point[i];
      hp_point[i] = saved + static_cast<long double>(step);
      const long double fp = f.value_hp(hp_point);
      hp_point[i] = saved - static_cast<long double>(step);
      const long double fm = f.value_hp(hp_point);
      hp_point[i] = saved;
      numeric = static_cast<double>((fp - fm) / (2.0L * static_cast<long double>(step)));
    } else {
      const double saved = point[i];
      point[i] = saved + step;
      const double fp = f.value(point);
      point[i] = saved - step;
      const double fm = f.value(point);
      point[i] = saved;
      numeric = (fp - fm) / (2.0 * step);
    }
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      res.finite = false;
      res.max_rel_err = std::numeric_limits<double>::infinity();
      res.worst_index = i;
      return res;
    }
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = analytic[i];
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

}  // namespace trisim
