#include "copyhan/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "copyhan/errors.hpp"

namespace copyhan {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                           double step, double tolerance, double abs_floor) {
  if (step < 1e-6 || step > 1e-4) throw ContractError("grad_check: step must lie in [1e-6, 1e-4]");

  for (const auto& p : params) {
    Tensor t = p.value;
    t.zero_grad();
    t.set_requires_grad(true);
  }
  Tensor loss = loss_fn();
  const double base = loss.item();
  loss.backward();
  {
    NoGradGuard no_grad;
    if (loss_fn().item() != base) throw ContractError("grad_check: loss function is not deterministic");
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (const auto& p : params) {
    Tensor t = p.value;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double plus = loss_fn().item();
      data[i] = saved - step;
      const double minus = loss_fn().item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_param = p.name;
          report.worst_index = i;
          report.worst_analytic = analytic[i];
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace copyhan
