#pragma once
// Central-difference gradient verification. The caller computes analytic
// gradients into each parameter's grad slot, then hands over a pure loss
// closure; this harness perturbs sampled elements and compares.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cclab/seeds.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

struct GradCheckOpts {
  double h = 1e-3;
  // 0 checks every element; otherwise a seeded subsample per parameter.
  int max_elems_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t elements_checked = 0;

  std::string describe() const {
    return worst_param + "[" + std::to_string(worst_index) +
           "]: analytic=" + std::to_string(worst_analytic) +
           " numeric=" + std::to_string(worst_numeric) +
           " rel_err=" + std::to_string(max_rel_err) + " (" +
           std::to_string(elements_checked) + " elements)";
  }
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// loss_fn must be a pure function of the current parameter values (batch-norm
// running-stat updates disabled, fixed inputs, no RNG draws).
inline GradCheckResult grad_check(const std::vector<ParamTensor<double>*>& params,
                                  const std::function<double()>& loss_fn,
                                  const GradCheckOpts& opts = {}) {
  GradCheckResult res;
  int pidx = 0;
  for (ParamTensor<double>* p : params) {
    std::vector<std::size_t> idx(p->value.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.max_elems_per_param > 0 &&
        idx.size() > static_cast<std::size_t>(opts.max_elems_per_param)) {
      auto rng = make_rng(derive_seed(opts.seed, 0x6763, static_cast<std::uint64_t>(pidx)));
      for (std::size_t i = 0; i < static_cast<std::size_t>(opts.max_elems_per_param); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      idx.resize(static_cast<std::size_t>(opts.max_elems_per_param));
    }
    for (std::size_t i : idx) {
      const double saved = p->value[i];
      p->value[i] = saved + opts.h;
      const double up = loss_fn();
      p->value[i] = saved - opts.h;
      const double down = loss_fn();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double analytic = p->grad[i];
      const double e = rel_err(analytic, numeric);
      ++res.elements_checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst_param = p->name;
        res.worst_index = i;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
    }
    ++pidx;
  }
  return res;
}

}  // namespace cclab
