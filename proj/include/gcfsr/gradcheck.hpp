#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "gcfsr/tensor.hpp"

namespace gcfsr {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckReport {
  double error = 0;      // worst per-input ‖analytic − numeric‖ / max(‖·‖)
  double error_all = 0;  // the same with kink-straddling entries included
  std::int64_t checked = 0;
  std::int64_t skipped = 0;  // entries whose ±h interval straddles a kink
};

// Central finite differences with step h against the tape gradient.
//
// Piecewise-linear activations make the loss non-differentiable on a measure
// zero set, but a ±h perturbation can still cross a kink. Such entries are
// detected by disagreement between the central differences at h and h/2
// (which agree to O(h²) on smooth intervals) and excluded from the error.
inline GradCheckReport grad_check_report(const ScalarFn& f, std::vector<Tensor> inputs,
                                         double h = 1e-4,
                                         std::int64_t max_entries = std::int64_t{1} << 40) {
  for (auto& in : inputs) in.set_requires_grad(true);
  GradTape tape;
  {
    GradTape::Recording rec(tape);
    tape.backward(f(inputs));
  }
  GradCheckReport report;
  for (auto& in : inputs) {
    const auto analytic = tape.grad(in).to_vector();
    const std::int64_t n = in.numel();
    const std::int64_t stride = std::max<std::int64_t>(1, n / max_entries);
    auto set = [&](std::size_t idx, double value) {
      dispatch(in.dtype(), [&](auto tag) {
        using T = decltype(tag);
        in.mutable_data<T>()[idx] = static_cast<T>(value);
      });
    };
    double diff2 = 0, a2 = 0, n2 = 0, diff2_all = 0, a2_all = 0, n2_all = 0;
    for (std::int64_t j = 0; j < n; j += stride) {
      const auto idx = static_cast<std::size_t>(j);
      const double orig = in.at(j);
      auto eval = [&](double delta) {
        set(idx, orig + delta);
        const double v = f(inputs).item();
        set(idx, orig);
        return v;
      };
      const double fp = eval(h), fm = eval(-h);
      const double fp2 = eval(h / 2), fm2 = eval(-h / 2);
      const double numeric = (fp - fm) / (2 * h);
      const double half = (fp2 - fm2) / h;
      ++report.checked;
      diff2_all += (analytic[idx] - numeric) * (analytic[idx] - numeric);
      a2_all += analytic[idx] * analytic[idx];
      n2_all += numeric * numeric;
      if (std::abs(numeric - half) > 1e-6 * std::max(1.0, std::abs(numeric))) {
        ++report.skipped;
        continue;
      }
      diff2 += (analytic[idx] - numeric) * (analytic[idx] - numeric);
      a2 += analytic[idx] * analytic[idx];
      n2 += numeric * numeric;
    }
    if (a2_all > 0 || n2_all > 0)
      report.error_all = std::max(report.error_all, std::sqrt(diff2_all) /
                                                        std::max({std::sqrt(a2_all), std::sqrt(n2_all), 1e-300}));
    if (a2 == 0 && n2 == 0) continue;
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    report.error = std::max(report.error, std::sqrt(diff2) / denom);
  }
  return report;
}

// Worst relative error, or +infinity when more than 2% of entries had to be
// skipped (the check would no longer be meaningful).
inline double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-4,
                         std::int64_t max_entries = std::int64_t{1} << 40) {
  const auto r = grad_check_report(f, std::move(inputs), h, max_entries);
  if (r.skipped * 50 > r.checked) return std::numeric_limits<double>::infinity();
  return r.error;
}

}  // namespace gcfsr
