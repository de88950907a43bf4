#pragma once

#include <functional>
#include <string>
#include <vector>

#include "copyhan/tensor.hpp"

namespace copyhan {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;   // label of the worst entry
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Compares reverse-mode gradients of `loss_fn` against central differences
// (f(x+h) - f(x-h)) / 2h for every entry of every parameter. The relative error
// of an entry is |a - n| / max(|a|, |n|, abs_floor). `loss_fn` must rebuild its
// graph from the current parameter values on every call and be deterministic.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                           double step, double tolerance, double abs_floor = 1e-6);

}  // namespace copyhan
