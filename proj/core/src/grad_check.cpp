#include "probmed/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace probmed::diff {
namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(g.constant(p));
  return f(g, vars).item();
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const Tensor> params,
                                  double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step h must be positive");

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(g.parameter(p));
    Var loss = f(g, vars);
    g.backward(loss);
    for (Var v : vars) analytic.push_back(g.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t e = 0; e < work[p].size(); ++e) {
      const double orig = work[p][e];
      work[p][e] = orig + h;
      const double up = evaluate(f, work);
      work[p][e] = orig - h;
      const double down = evaluate(f, work);
      work[p][e] = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[p][e] - numeric) / std::max(1.0, std::abs(numeric));
      ++report.entries_checked;
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        report.worst_param = p;
        report.worst_entry = e;
        report.analytic = analytic[p][e];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace probmed::diff
