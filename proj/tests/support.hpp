#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "copyhan/grad_check.hpp"
#include "copyhan/model.hpp"
#include "copyhan/ops.hpp"

namespace copyhan::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

inline Tensor random_param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  auto t = random_tensor(std::move(shape), rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Small enough for finite differences, wide enough for two heads.
inline ModelConfig tiny_config(std::size_t vocab = 9, std::size_t n_context = 1) {
  ModelConfig c;
  c.transformer.d_model = 4;
  c.transformer.n_layers = 1;
  c.transformer.m_heads = 2;
  c.transformer.d_ff = 6;
  c.transformer.vocab_src = vocab;
  c.transformer.vocab_tgt = vocab;
  c.transformer.dropout = 0.0;
  c.transformer.max_len = 32;
  c.n_context = n_context;
  return c;
}

inline ModelConfig small_config(std::size_t vocab = 12, std::size_t n_context = 1) {
  ModelConfig c;
  c.transformer.d_model = 8;
  c.transformer.n_layers = 2;
  c.transformer.m_heads = 2;
  c.transformer.d_ff = 16;
  c.transformer.vocab_src = vocab;
  c.transformer.vocab_tgt = vocab;
  c.transformer.dropout = 0.1;
  c.transformer.max_len = 64;
  c.n_context = n_context;
  return c;
}

// Moves every parameter off its initial value (zero-initialised query layers
// would otherwise leave their partners without gradient).
inline void jitter_parameters(const Model& m, std::uint64_t seed, double scale = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, scale);
  for (const auto& p : m.params()) {
    Tensor t = p.value;
    for (double& v : t.mutable_data()) v += noise(rng);
  }
}

inline void expect_gradients_match(const std::function<Tensor()>& f, const std::vector<NamedTensor>& params,
                                   double tolerance = 1e-4) {
  const auto report = grad_check(f, params, 1e-5, tolerance);
  EXPECT_TRUE(report.passed) << "worst " << report.worst_param << "[" << report.worst_index
                             << "] analytic=" << report.worst_analytic << " numeric=" << report.worst_numeric
                             << " rel=" << report.max_rel_error;
}

inline double row_sum(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (double v : t.row_values(r)) s += v;
  return s;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) return false;
  return true;
}

}  // namespace copyhan::testing
