#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "copyhan/tensor.hpp"

// Differentiable primitives. Matrices are rank-2 tensors; there is no implicit
// broadcasting apart from scalar multiplication, so row/column broadcasts are
// spelled out as separate ops.
namespace copyhan {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// factor * a + offset, elementwise.
Tensor affine(const Tensor& a, double factor, double offset);

// x[n x d] + bias[1 x d] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// Row r of x[n x d] multiplied by s[n x 1](r).
Tensor scale_rows(const Tensor& x, const Tensor& s);
// out[r] = <a[r,:], b[r,:]>, shape [n x 1].
Tensor rowwise_dot(const Tensor& a, const Tensor& b);
// Each row divided by its sum. Rows must have positive sums.
Tensor normalize_rows(const Tensor& x);

Tensor sum(const Tensor& x);
// axis 0 -> [1 x cols], axis 1 -> [rows x 1].
Tensor mean(const Tensor& x, int axis);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Natural log of max(x, floor); gradient is zero where the floor is active.
Tensor log_clamped(const Tensor& x, double floor);
Tensor softmax_lastdim(const Tensor& x);

// Rows of table[V x d] selected by ids, shape [ids.size() x d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
// Row-wise normalization over the last dimension followed by gain and bias [1 x d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);
// mask.size() == x.numel(); entries with mask true are replaced by value.
Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value);

}  // namespace copyhan
