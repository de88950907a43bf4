#pragma once

#include <cstdint>

#include "copyhan/grad_check.hpp"
#include "copyhan/model.hpp"

namespace copyhan {

// Toy copy-HAN configuration for finite-difference checks: d=8, 2 heads,
// 2 layers, vocabulary 13, two context sentences, no dropout.
ModelConfig gradcheck_toy_config();

// Central-difference check of one full copy-HAN decoder step (contextual
// encode, decode, gate, mixture, smoothed cross-entropy) against reverse mode,
// over every parameter of every group. Parameters are perturbed off their
// initial values first so zero-initialised tensors are exercised too.
GradCheckReport full_step_gradient_check(std::uint64_t seed = 1, double tolerance = 1e-4, double step = 5e-5);

}  // namespace copyhan
