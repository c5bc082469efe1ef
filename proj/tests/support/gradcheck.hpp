#pragma once

// Central finite-difference gradient oracle. Lives entirely in test code and
// never touches the reverse-mode path it checks: the loss is re-evaluated
// from perturbed leaf values, (f(x+h) - f(x-h)) / 2h.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "amx/tensor.hpp"

namespace amx::test {

struct GradCheckResult {
  double worst = 0.0;   // max |analytic - numeric| / (atol + rtol*max(|a|,|n|))
  double max_abs_diff = 0.0;
  size_t checked = 0;
  bool ok(double) const { return worst <= 1.0; }
};

template <typename T>
GradCheckResult grad_check(const std::function<TensorT<T>()>& loss_fn,
                           std::vector<TensorT<T>> leaves, double rtol = 1e-4,
                           double atol = 1e-7, T h = T(1e-4)) {
  for (auto& l : leaves) l.zero_grad();
  auto loss = loss_fn();
  backward(loss);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) analytic.push_back(l.grad());

  GradCheckResult res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values_mut();
    for (size_t k = 0; k < vals.size(); ++k) {
      const T orig = vals[k];
      vals[k] = orig + h;
      const double f_plus = static_cast<double>(loss_fn().item());
      vals[k] = orig - h;
      const double f_minus = static_cast<double>(loss_fn().item());
      vals[k] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[li][k]);
      const double diff = std::abs(a - numeric);
      const double bound = atol + rtol * std::max(std::abs(a), std::abs(numeric));
      res.worst = std::max(res.worst, diff / bound);
      res.max_abs_diff = std::max(res.max_abs_diff, diff);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace amx::test
