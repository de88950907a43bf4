#include "copyhan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "copyhan/errors.hpp"

namespace copyhan {

using detail::Node;

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// Gradient buffer of parent i, or nullptr when it does not track gradients.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

const std::vector<double>& parent_data(Node& self, std::size_t i) { return self.parents[i]->data; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(p * r, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < p; ++i) {
    double* orow = out.data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = A[i * q + k];
      const double* brow = B.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
  }
  return detail::make_result({p, r}, std::move(out), {a, b}, "matmul", [p, q, r](Node& self) {
    const auto& g = self.grad;
    const auto& A = parent_data(self, 0);
    const auto& B = parent_data(self, 1);
    if (auto* ga = parent_grad(self, 0)) {
      // dA = G * B^T
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < r; ++j) s += g[i * r + j] * B[k * r + j];
          (*ga)[i * q + k] += s;
        }
      }
    }
    if (auto* gb = parent_grad(self, 1)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = A[i * q + k];
          double* gbrow = gb->data() + k * r;
          const double* grow = g.data() + i * r;
          for (std::size_t j = 0; j < r; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto A = a.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = A[i * m + j];
  return detail::make_result({m, n}, std::move(out), {a}, "transpose", [n, m](Node& self) {
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*ga)[i * m + j] += self.grad[j * n + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    const auto& A = parent_data(self, 0);
    const auto& B = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * B[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * A[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

Tensor affine(const Tensor& a, double factor, double offset) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = factor * v + offset;
  return detail::make_result(a.shape(), std::move(out), {a}, "affine", [factor](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    }
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.numel() != d) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) + " does not fit rows of " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto B = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += B[j];
  return detail::make_result(x.shape(), std::move(out), {x, bias}, "add_row_bias", [n, d](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_matrix(x, "scale_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (s.rank() != 2 || s.rows() != n || s.cols() != 1) {
    throw DimensionError("scale_rows: scale " + shape_to_string(s.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto S = s.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= S[i];
  return detail::make_result(x.shape(), std::move(out), {x, s}, "scale_rows", [n, d](Node& self) {
    const auto& X = parent_data(self, 0);
    const auto& S = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i * d + j] * S[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += self.grad[i * d + j] * X[i * d + j];
        (*g)[i] += acc;
      }
    }
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_matrix(a, "rowwise_dot");
  require_same_shape(a, b, "rowwise_dot");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += A[i * d + j] * B[i * d + j];
  return detail::make_result({n, 1}, std::move(out), {a, b}, "rowwise_dot", [n, d](Node& self) {
    const auto& A = parent_data(self, 0);
    const auto& B = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i] * B[i * d + j];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i] * A[i * d + j];
    }
  });
}

Tensor normalize_rows(const Tensor& x) {
  require_matrix(x, "normalize_rows");
  const std::size_t n = x.rows(), d = x.cols();
  const auto X = x.data();
  std::vector<double> sums(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) sums[i] += X[i * d + j];
    if (!(sums[i] > 0.0)) throw ContractError("normalize_rows: row sum must be positive");
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = X[i * d + j] / sums[i];
  return detail::make_result(x.shape(), out, {x}, "normalize_rows", [n, d, sums, out](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      // y = x / s  =>  dx_j = (g_j - <g, y>) / s
      for (std::size_t i = 0; i < n; ++i) {
        double gy = 0.0;
        for (std::size_t j = 0; j < d; ++j) gy += self.grad[i * d + j] * out[i * d + j];
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += (self.grad[i * d + j] - gy) / sums[i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({1}, {s}, {x}, "sum", [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x, int axis) {
  require_matrix(x, "mean");
  const std::size_t n = x.rows(), d = x.cols();
  const auto X = x.data();
  if (axis == 0) {
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[j] += X[i * d + j];
    for (double& v : out) v /= static_cast<double>(n);
    return detail::make_result({1, d}, std::move(out), {x}, "mean0", [n, d](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[j] / static_cast<double>(n);
      }
    });
  }
  if (axis == 1) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[i] += X[i * d + j];
      out[i] /= static_cast<double>(d);
    }
    return detail::make_result({n, 1}, std::move(out), {x}, "mean1", [n, d](Node& self) {
      if (auto* g = parent_grad(self, 0)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i] / static_cast<double>(d);
      }
    });
  }
  throw ContractError("mean: axis must be 0 or 1");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    require_matrix(t, "concat_cols");
    if (t.rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(t.cols());
    total += t.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto P = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = P[i * widths[k] + j];
    offset += widths[k];
  }
  return detail::make_result({n, total}, std::move(out), parts, "concat_cols",
                             [n, total, widths](Node& self) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (auto* g = parent_grad(self, k)) {
                                   for (std::size_t i = 0; i < n; ++i)
                                     for (std::size_t j = 0; j < widths[k]; ++j)
                                       (*g)[i * widths[k] + j] += self.grad[i * total + off + j];
                                 }
                                 off += widths[k];
                               }
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::vector<std::size_t> sizes;
  std::size_t n = 0;
  std::vector<double> out;
  for (const Tensor& t : parts) {
    require_matrix(t, "concat_rows");
    if (t.cols() != d) throw DimensionError("concat_rows: column counts differ");
    sizes.push_back(t.numel());
    n += t.rows();
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return detail::make_result({n, d}, std::move(out), parts, "concat_rows", [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (auto* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < sizes[k]; ++i) (*g)[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t n = x.rows(), d = x.cols();
  if (count == 0 || start + count > d) throw DimensionError("slice_cols: range out of bounds");
  std::vector<double> out(n * count);
  const auto X = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = X[i * d + start + j];
  return detail::make_result({n, count}, std::move(out), {x}, "slice_cols",
                             [n, d, start, count](Node& self) {
                               if (auto* g = parent_grad(self, 0)) {
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < count; ++j)
                                     (*g)[i * d + start + j] += self.grad[i * count + j];
                               }
                             });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (count == 0 || start + count > n) throw DimensionError("slice_rows: range out of bounds");
  const auto X = x.data();
  std::vector<double> out(X.begin() + static_cast<std::ptrdiff_t>(start * d),
                          X.begin() + static_cast<std::ptrdiff_t>((start + count) * d));
  return detail::make_result({count, d}, std::move(out), {x}, "slice_rows", [d, start](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[start * d + i] += self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    const auto& X = parent_data(self, 0);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i)
        if (X[i] > 0.0) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) {
    // Branch keeps exp() from overflowing on either tail.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return detail::make_result(x.shape(), out, {x}, "sigmoid", [out](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * out[i] * (1.0 - out[i]);
    }
  });
}

Tensor log_clamped(const Tensor& x, double floor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = std::log(std::max(v, floor));
  return detail::make_result(x.shape(), std::move(out), {x}, "log_clamped", [floor](Node& self) {
    const auto& X = parent_data(self, 0);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i)
        if (X[i] > floor) (*g)[i] += self.grad[i] / X[i];
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t d = x.shape().back();
  const std::size_t n = x.numel() / d;
  const auto X = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = X.data() + i * d;
    const double mx = *std::max_element(row, row + d);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax_lastdim: every entry of a row is masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = std::exp(row[j] - mx);
      z += out[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= z;
  }
  return detail::make_result(x.shape(), out, {x}, "softmax", [n, d, out](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        double gy = 0.0;
        for (std::size_t j = 0; j < d; ++j) gy += self.grad[i * d + j] * out[i * d + j];
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += out[i * d + j] * (self.grad[i * d + j] - gy);
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw ContractError("embedding: empty id list");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  const auto T = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= v) {
      throw ContractError("embedding: id " + std::to_string(rows[i]) + " outside table of " +
                          std::to_string(v) + " rows");
    }
    std::copy_n(T.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return detail::make_result({rows.size(), d}, std::move(out), {table}, "embedding", [rows, d](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[static_cast<std::size_t>(rows[i]) * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) throw DimensionError("layer_norm: gain/bias width mismatch");
  const auto X = x.data();
  const auto G = gain.data();
  const auto B = bias.data();
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += X[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (X[i * d + j] - mu) * (X[i * d + j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (X[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * G[j] + B[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm", [n, d, xhat, inv_std](Node& self) {
        const auto& G = parent_data(self, 1);
        const auto& dy = self.grad;
        if (auto* gx = parent_grad(self, 0)) {
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[i * d + j] * G[j];
              s1 += dxh;
              s2 += dxh * xhat[i * d + j];
            }
            const double dn = static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[i * d + j] * G[j];
              (*gx)[i * d + j] += inv_std[i] * (dxh - s1 / dn - xhat[i * d + j] * s2 / dn);
            }
          }
        }
        if (auto* gg = parent_grad(self, 1)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[i * d + j] * xhat[i * d + j];
        }
        if (auto* gb = parent_grad(self, 2)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gb)[j] += dy[i * d + j];
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return detail::make_result(x.shape(), std::move(out), {x}, "dropout", [mask](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * mask[i];
    }
  });
}

Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value) {
  if (mask.size() != x.numel()) throw DimensionError("masked_fill: mask size does not match tensor");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  return detail::make_result(x.shape(), std::move(out), {x}, "masked_fill", [mask](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i)
        if (!mask[i]) (*g)[i] += self.grad[i];
    }
  });
}

}  // namespace copyhan
