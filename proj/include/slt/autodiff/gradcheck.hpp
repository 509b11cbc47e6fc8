#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "slt/autodiff/tensor.hpp"

namespace slt::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_raw_rel_error = 0.0;  // same, without the rounding allowance
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Compare backward() against central differences for every coordinate of
/// `params`. The difference is Richardson-extrapolated from steps h and h/2,
/// h = h_rel * max(1, |p|), so truncation is O(h⁴) and the step can stay
/// large enough that roundoff in f does not swamp small components. The
/// relative error of a coordinate is (|ad - fd| - r) / max(|ad|, |fd|, floor),
/// where r ~ ulp(f)/h is the rounding resolution of the difference quotient
/// and floor = 1e-6 * max|ad| judges near-zero components on the scale of the
/// whole gradient. Coordinates where the one-sided slopes disagree at h and
/// at h/10 by a non-shrinking amount sit on a kink (|x| at 0) and are skipped.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double h_rel = 1e-4) {
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> ad;
  double gmax = 0.0;
  for (auto& p : params) {
    ad.push_back(p.grad());
    for (double g : p.grad()) gmax = std::max(gmax, std::abs(g));
  }
  const double floor = std::max(1e-6 * gmax, 1e-300);

  GradCheckResult r;
  const double f0 = f().item();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi].value();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double x = val[i];
      auto eval = [&](double d) {
        val[i] = x + d;
        const double y = f().item();
        val[i] = x;
        return y;
      };
      const double h = h_rel * std::max(1.0, std::abs(x));
      const double fp = eval(h), fm = eval(-h);
      const double jump = std::abs((fp - f0) - (f0 - fm)) / h;
      const double fd = (4.0 * (eval(h / 2.0) - eval(-h / 2.0)) / h - (fp - fm) / (2.0 * h)) / 3.0;
      const double noise = 1e-14 * std::max(1.0, std::abs(f0)) / h;
      if (jump > 1e-3 * std::max({std::abs(fd), floor}) && jump > 100.0 * noise) {
        const double hs = h / 10.0;
        const double js = std::abs((eval(hs) - f0) - (f0 - eval(-hs))) / hs;
        if (js > 0.5 * jump) {
          ++r.skipped_kinks;
          continue;
        }
      }
      const double a = ad[pi][i];
      const double res = 3e-15 * std::max({std::abs(fp), std::abs(fm), std::abs(f0)}) / h;
      const double err = std::max(0.0, std::abs(a - fd) - res) / std::max({std::abs(a), std::abs(fd), floor});
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.max_raw_rel_error =
          std::max(r.max_raw_rel_error, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor}));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace slt::ad
