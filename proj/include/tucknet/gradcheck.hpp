#pragma once

// Central finite-difference verification of analytic gradients. The loss
// callback must re-evaluate the objective from the current parameter values;
// the harness perturbs one coordinate at a time and restores it afterwards.

#include <functional>
#include <span>
#include <string>
#include <unordered_set>

#include "tucknet/rng.hpp"
#include "tucknet/tensor.hpp"

namespace tucknet {

struct ParamGrad {
  std::string name;
  TensorXd* param = nullptr;
  const TensorXd* grad = nullptr;  // analytic gradient, same shape as *param
};

struct GradCheckOptions {
  double h = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample per tensor.
  Index max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t coords_checked = 0;
  std::int64_t failures = 0;
  std::string worst_param;
  Index worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed() const { return failures == 0; }
};

inline GradCheckReport check_gradients(const std::function<double()>& loss,
                                       std::span<const ParamGrad> params,
                                       const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  // Folding the absolute floor into the denominator makes the reported error
  // directly comparable to rel_tol: |a-n| <= max(floor, tol*max|.|)  <=>
  // |a-n| / max(|a|, |n|, floor/tol) <= tol.
  const double denom_floor = opt.abs_floor / opt.rel_tol;

  for (const ParamGrad& pg : params) {
    TensorXd& p = *pg.param;
    const TensorXd& analytic = *pg.grad;
    std::vector<Index> coords;
    if (opt.max_coords_per_tensor <= 0 || opt.max_coords_per_tensor >= p.size()) {
      coords.resize(static_cast<std::size_t>(p.size()));
      for (Index i = 0; i < p.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      CounterRng rng(opt.seed, std::hash<std::string>{}(pg.name));
      std::unordered_set<Index> picked;
      while (static_cast<Index>(picked.size()) < opt.max_coords_per_tensor) {
        picked.insert(rng.uniform_int(p.size()));
      }
      coords.assign(picked.begin(), picked.end());
      std::sort(coords.begin(), coords.end());
    }

    for (Index i : coords) {
      const double original = p[i];
      p[i] = original + opt.h;
      const double up = loss();
      p[i] = original - opt.h;
      const double down = loss();
      p[i] = original;
      const double numeric = (up - down) / (2.0 * opt.h);
      const double a = analytic[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pg.name;
        report.worst_coord = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      if (rel > opt.rel_tol) ++report.failures;
    }
  }
  return report;
}

}  // namespace tucknet
