#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "probmed/graph.hpp"

namespace probmed::diff {

/// Builds a scalar loss on `graph` from parameter variables (one per tensor
/// handed to grad_check, same order).
using ScalarFunction = std::function<Var(Graph& graph, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every parameter. The error of an
/// entry is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const Tensor> params,
                                  double h = 1e-5);

inline double grad_check(const ScalarFunction& f, std::span<const Tensor> params,
                         double h = 1e-5) {
  return grad_check_report(f, params, h).max_rel_error;
}

}  // namespace probmed::diff
