#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ergl/ops.hpp"
#include "ergl/rng.hpp"

namespace ergl::ad {

struct GradCheckIssue {
  std::string param;
  int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  bool pass = true;
  std::vector<GradCheckIssue> failures;
};

// Central differences at eps=1e-5 carry ~1e-10 absolute noise on O(1)
// losses, so gradients below the 1e-4 floor are compared absolutely.
inline double fd_rel_err(double a, double n) {
  double scale = std::max({std::fabs(a), std::fabs(n), 1e-4});
  return std::fabs(a - n) / scale;
}

// Central finite-difference check of d(f)/d(param) against the tape's
// gradients. f must be deterministic given the parameter values (use frozen
// normalization statistics). When max_entries_per_param is positive, only
// that many entries per tensor are probed (chosen via rng when provided,
// leading entries otherwise).
template <typename S, typename F>
GradCheckReport grad_check(F&& f, const std::vector<std::pair<std::string, Tensor<S>>>& params,
                           double eps, double tol, int64_t max_entries_per_param = -1,
                           Rng* rng = nullptr) {
  GradCheckReport report;

  std::vector<std::vector<S>> analytic;
  {
    for (const auto& [name, p] : params) Tensor<S>(p).zero_grad();
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = f();
    tape.backward(loss);
    for (const auto& [name, p] : params) {
      if (p.has_grad())
        analytic.push_back(p.grad());
      else
        analytic.push_back(std::vector<S>(static_cast<size_t>(p.numel()), S(0)));
    }
  }

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S> p = params[pi].second;
    int64_t n = p.numel();
    std::vector<int64_t> entries;
    if (max_entries_per_param > 0 && n > max_entries_per_param) {
      if (rng) {
        std::vector<int64_t> all(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
        rng->shuffle(all);
        entries.assign(all.begin(), all.begin() + max_entries_per_param);
      } else {
        for (int64_t i = 0; i < max_entries_per_param; ++i) entries.push_back(i);
      }
    } else {
      for (int64_t i = 0; i < n; ++i) entries.push_back(i);
    }

    for (int64_t idx : entries) {
      S saved = p.data()[idx];
      p.data()[idx] = saved + static_cast<S>(eps);
      double up = static_cast<double>(f().item());
      p.data()[idx] = saved - static_cast<S>(eps);
      double down = static_cast<double>(f().item());
      p.data()[idx] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = static_cast<double>(analytic[pi][static_cast<size_t>(idx)]);
      double rel = fd_rel_err(a, numeric);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
      if (rel > tol)
        report.failures.push_back({params[pi].first, idx, a, numeric, rel});
    }
  }
  report.pass = report.failures.empty();
  return report;
}

}  // namespace ergl::ad
