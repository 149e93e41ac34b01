// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xdial/common/errors.hpp"
#include "xdial/numerics/kernels.hpp"

namespace xdial::num {

namespace {

using detail::Node;

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

struct Broadcast {
  bool a_is_big = true;
  Shape out_shape;
  std::size_t n = 0;        // elements in the output
  std::size_t small_n = 0;  // elements in the smaller operand
};

Broadcast resolve(const Tensor& a, const Tensor& b, const char* op) {
  Broadcast bc;
  if (a.shape() == b.shape() || b.numel() == 1 || is_suffix(b.shape(), a.shape())) {
    bc.a_is_big = true;
    bc.out_shape = a.shape();
    bc.small_n = b.numel();
  } else if (a.numel() == 1 || is_suffix(a.shape(), b.shape())) {
    bc.a_is_big = false;
    bc.out_shape = b.shape();
    bc.small_n = a.numel();
  } else {
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape()) + " with " +
                     to_string(b.shape()));
  }
  bc.n = numel(bc.out_shape);
  return bc;
}

// Index into a (or b) for output element i.
inline std::size_t idx_a(const Broadcast& bc, std::size_t i) { return bc.a_is_big ? i : i % bc.small_n; }
inline std::size_t idx_b(const Broadcast& bc, std::size_t i) { return bc.a_is_big ? i % bc.small_n : i; }

std::size_t last_dim(const Tensor& t, const char* op) {
  if (t.rank() == 0) throw ShapeError(std::string(op) + ": needs rank >= 1, got scalar");
  return t.shape().back();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

Mask Mask::identity(std::size_t n) {
  Mask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

Mask Mask::causal(std::size_t n) {
  Mask m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  }
  return m;
}

Mask Mask::from_rows(const std::vector<std::vector<int>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Mask m(rows.size(), cols, false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ShapeError("Mask::from_rows: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m.set(r, c, rows[r][c] != 0);
  }
  return m;
}

bool Mask::is_symmetric() const {
  if (rows_ != cols_) return false;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = r + 1; c < cols_; ++c) {
      if ((*this)(r, c) != (*this)(c, r)) return false;
    }
  }
  return true;
}

std::size_t Mask::row_count(std::size_t r) const {
  return static_cast<std::size_t>(
      std::count(bits_.begin() + r * cols_, bits_.begin() + (r + 1) * cols_, 1));
}

Mask Mask::operator&(const Mask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("Mask &: shape mismatch");
  Mask out(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const auto bc = resolve(a, b, "add");
  std::vector<double> out(bc.n);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < bc.n; ++i) out[i] = da[idx_a(bc, i)] + db[idx_b(bc, i)];
  return make_result(bc.out_shape, std::move(out), {a, b}, [bc](Node& self) {
    for (int side = 0; side < 2; ++side) {
      Node& p = *self.parents[side];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < bc.n; ++i) {
        g[side == 0 ? idx_a(bc, i) : idx_b(bc, i)] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto bc = resolve(a, b, "sub");
  std::vector<double> out(bc.n);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < bc.n; ++i) out[i] = da[idx_a(bc, i)] - db[idx_b(bc, i)];
  return make_result(bc.out_shape, std::move(out), {a, b}, [bc](Node& self) {
    for (int side = 0; side < 2; ++side) {
      Node& p = *self.parents[side];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < bc.n; ++i) {
        g[side == 0 ? idx_a(bc, i) : idx_b(bc, i)] += sign * self.grad[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto bc = resolve(a, b, "mul");
  std::vector<double> out(bc.n);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < bc.n; ++i) out[i] = da[idx_a(bc, i)] * db[idx_b(bc, i)];
  return make_result(bc.out_shape, std::move(out), {a, b}, [bc](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < bc.n; ++i) g[idx_a(bc, i)] += self.grad[i] * pb.data[idx_b(bc, i)];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < bc.n; ++i) g[idx_b(bc, i)] += self.grad[i] * pa.data[idx_a(bc, i)];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.data[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a.data()[i] > 0.0)) throw NumericError("log: non-positive input");
    out[i] = std::log(a.data()[i]);
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / p.data[i];
  });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = p.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t kb = b.shape()[b.rank() - 2];
  const std::size_t n = b.shape().back();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const Shape a_lead(a.shape().begin(), a.shape().end() - 2);
  const Shape b_lead(b.shape().begin(), b.shape().end() - 2);
  Shape lead;
  if (b_lead.empty()) {
    lead = a_lead;
  } else if (a_lead.empty()) {
    lead = b_lead;
  } else if (a_lead == b_lead) {
    lead = a_lead;
  } else {
    throw ShapeError("matmul: batch dimensions differ for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t batch = numel(lead);
  const std::size_t a_stride = a_lead.empty() ? 0 : m * k;
  const std::size_t b_stride = b_lead.empty() ? 0 : k * n;
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    kernels::gemm_nn(m, n, k, a.data().data() + bi * a_stride, b.data().data() + bi * b_stride,
                     out.data() + bi * m * n);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [=](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         const double* g = self.grad.data() + bi * m * n;
                         if (pa.requires_grad) {
                           kernels::gemm_nt(m, k, n, g, pb.data.data() + bi * b_stride,
                                            pa.grad_buffer().data() + bi * a_stride);
                         }
                         if (pb.requires_grad) {
                           kernels::gemm_tn(k, n, m, pa.data.data() + bi * a_stride, g,
                                            pb.grad_buffer().data() + bi * b_stride);
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + to_string(a.shape()));
  const std::size_t r = a.shape()[a.rank() - 2];
  const std::size_t c = a.shape().back();
  const std::size_t batch = a.numel() / (r * c);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  std::vector<double> out(a.numel());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* src = a.data().data() + bi * r * c;
    double* dst = out.data() + bi * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double* src = self.grad.data() + bi * r * c;
      double* dst = g.data() + bi * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Normalisers

namespace {

void softmax_backward(Node& self, std::size_t cols) {
  auto& g = self.parents[0]->grad_buffer();
  const std::size_t rows = self.data.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = self.data.data() + r * cols;
    const double* up = self.grad.data() + r * cols;
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += p[c] * up[c];
    for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += p[c] * (up[c] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  const std::size_t cols = last_dim(logits, "softmax");
  const std::size_t rows = logits.numel() / cols;
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result(logits.shape(), std::move(out), {logits},
                     [cols](Node& self) { softmax_backward(self, cols); });
}

Tensor masked_softmax(const Tensor& logits, const Mask& mask) {
  const std::size_t cols = last_dim(logits, "masked_softmax");
  const std::size_t mat_rows = logits.rank() >= 2 ? logits.shape()[logits.rank() - 2] : 1;
  if (mask.cols() != cols || (mask.rows() != mat_rows && mask.rows() != 1)) {
    throw ShapeError("masked_softmax: mask " + std::to_string(mask.rows()) + "x" +
                     std::to_string(mask.cols()) + " does not broadcast to " +
                     to_string(logits.shape()));
  }
  const std::size_t rows = logits.numel() / cols;
  std::vector<double> out(logits.numel(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t mr = mask.rows() == 1 ? 0 : r % mat_rows;
    const double* x = logits.data().data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(mr, c)) {
        mx = any ? std::max(mx, x[c]) : x[c];
        any = true;
      }
    }
    if (!any) {
      throw NumericError("masked_softmax: row " + std::to_string(r) +
                         " has no allowed entry (fully masked)");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(mr, c)) total += (y[c] = std::exp(x[c] - mx));
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result(logits.shape(), std::move(out), {logits},
                     [cols](Node& self) { softmax_backward(self, cols); });
}

Tensor log_softmax(const Tensor& logits) {
  const std::size_t cols = last_dim(logits, "log_softmax");
  const std::size_t rows = logits.numel() / cols;
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  return make_result(logits.shape(), std::move(out), {logits}, [cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const std::size_t rows = self.data.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += self.grad[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += self.grad[r * cols + c] - std::exp(self.data[r * cols + c]) * total;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                     to_string(bias.shape()) + " must match last dimension of " +
                     to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  // Normalised activations and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (xr[c] - mu) * is;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = h * gain.data()[c] + bias.data()[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* up = self.grad.data() + r * d;
      const double* h = xhat->data() + r * d;
      if (pg.requires_grad) {
        auto& gg = pg.grad_buffer();
        for (std::size_t c = 0; c < d; ++c) gg[c] += up[c] * h[c];
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        for (std::size_t c = 0; c < d; ++c) gb[c] += up[c];
      }
      if (px.requires_grad) {
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double dh = up[c] * pg.data[c];
          mean_dh += dh;
          mean_dh_h += dh * h[c];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        auto& gx = px.grad_buffer();
        for (std::size_t c = 0; c < d; ++c) {
          const double dh = up[c] * pg.data[c];
          gx[r * d + c] += (*inv_std)[r] * (dh - mean_dh - h[c] * mean_dh_h);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses and reductions

Tensor one_hot(const std::vector<int>& classes, std::size_t num_classes) {
  std::vector<double> values(classes.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= num_classes) {
      throw ShapeError("one_hot: class " + std::to_string(classes[i]) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    values[i * num_classes + static_cast<std::size_t>(classes[i])] = 1.0;
  }
  return Tensor({classes.size(), num_classes}, std::move(values));
}

Tensor cross_entropy(const Tensor& input, const Tensor& targets, CeInput kind) {
  if (input.shape() != targets.shape()) {
    throw ShapeError("cross_entropy: input " + to_string(input.shape()) + " vs targets " +
                     to_string(targets.shape()));
  }
  const std::size_t k = last_dim(input, "cross_entropy");
  const std::size_t rows = input.numel() / k;
  const auto y = targets.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (y[r * k + c] < 0.0) throw NumericError("cross_entropy: negative target entry");
      total += y[r * k + c];
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw NumericError("cross_entropy: target row " + std::to_string(r) + " sums to " +
                         std::to_string(total) + ", expected 1");
    }
  }
  const auto x = input.data();
  double loss = 0.0;
  auto probs = std::make_shared<std::vector<double>>(input.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * k;
    if (kind == CeInput::logits) {
      const double mx = *std::max_element(xr, xr + k);
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) total += std::exp(xr[c] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t c = 0; c < k; ++c) {
        (*probs)[r * k + c] = std::exp(xr[c] - lse);
        if (y[r * k + c] != 0.0) loss -= y[r * k + c] * (xr[c] - lse);
      }
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        if (y[r * k + c] == 0.0) continue;
        if (!(xr[c] > 0.0)) return Tensor::scalar(std::numeric_limits<double>::infinity());
        loss -= y[r * k + c] * std::log(xr[c]);
      }
    }
  }
  loss /= static_cast<double>(rows);
  return make_result(Shape{}, {loss}, {input, targets}, [=](Node& self) {
    Node& pin = *self.parents[0];
    if (!pin.requires_grad) return;
    const Node& py = *self.parents[1];
    auto& g = pin.grad_buffer();
    const double up = self.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      if (kind == CeInput::logits) {
        double ysum = 0.0;
        for (std::size_t c = 0; c < k; ++c) ysum += py.data[r * k + c];
        for (std::size_t c = 0; c < k; ++c) {
          g[r * k + c] += up * ((*probs)[r * k + c] * ysum - py.data[r * k + c]);
        }
      } else {
        for (std::size_t c = 0; c < k; ++c) {
          const double yc = py.data[r * k + c];
          if (yc != 0.0) g[r * k + c] -= up * yc / pin.data[r * k + c];
        }
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(Shape{}, {total}, {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor max_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("max_all: empty tensor");
  const auto d = a.data();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  return make_result(Shape{}, {d[arg]}, {a}, [arg](Node& self) {
    self.parents[0]->grad_buffer()[arg] += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Row/column plumbing

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != cols) {
      throw ShapeError("concat_rows: width " + std::to_string(p.dim(1)) + " vs " +
                       std::to_string(cols));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({rows, cols}, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& parent : self.parents) {
      const std::size_t n = parent->data.size();
      if (parent->requires_grad) {
        auto& g = parent->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: height " + std::to_string(p.dim(0)) + " vs " +
                       std::to_string(rows));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t c0 = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto d = parts[pi].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.data() + r * widths[pi], widths[pi], out.data() + r * cols + c0);
    c0 += widths[pi];
  }
  return make_result({rows, cols}, std::move(out), parts, [=](Node& self) {
    std::size_t c0 = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      Node& p = *self.parents[pi];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[pi]; ++c)
            g[r * widths[pi] + c] += self.grad[r * cols + c0 + c];
      }
      c0 += widths[pi];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin > end || end > a.dim(0)) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + to_string(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return make_result({end - begin, cols}, std::move(out), {a}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin > end || end > a.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + to_string(a.shape()));
  }
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.data().data() + r * cols + begin, w, out.data() + r * w);
  return make_result({rows, w}, std::move(out), {a}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += self.grad[r * w + c];
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_matrix(table, "gather_rows");
  const std::size_t vocab = table.dim(0);
  const std::size_t cols = table.dim(1);
  std::vector<double> out(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("gather_rows: row id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * cols, cols,
                out.data() + i * cols);
  }
  return make_result({ids.size(), cols}, std::move(out), {table}, [ids, cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c)
        g[static_cast<std::size_t>(ids[i]) * cols + c] += self.grad[i * cols + c];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += a.data()[r * cols + c];
  for (double& v : out) v /= static_cast<double>(rows);
  return make_result({1, cols}, std::move(out), {a}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        g[r * cols + c] += self.grad[c] / static_cast<double>(rows);
  });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  require_matrix(a, "l2_normalize_rows");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  std::vector<double> out(a.numel());
  auto denom = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += a.data()[r * cols + c] * a.data()[r * cols + c];
    (*denom)[r] = std::max(std::sqrt(ss), eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.data()[r * cols + c] / (*denom)[r];
  }
  return make_result(a.shape(), std::move(out), {a}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* up = self.grad.data() + r * cols;
      const bool clamped = (*denom)[r] <= eps;
      double dot = 0.0;
      if (!clamped) {
        for (std::size_t c = 0; c < cols; ++c) dot += y[c] * up[c];
      }
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += (up[c] - y[c] * dot) / (*denom)[r];
    }
  });
}

Tensor take(const Tensor& a, std::vector<std::size_t> source, Shape shape) {
  if (numel(shape) != source.size()) {
    throw ShapeError("take: " + std::to_string(source.size()) + " indices for shape " +
                     to_string(shape));
  }
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= a.numel()) throw ShapeError("take: index out of range for " + to_string(a.shape()));
    out[i] = a.data()[source[i]];
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(source));
  return make_result(std::move(shape), std::move(out), {a}, [idx](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) g[(*idx)[i]] += self.grad[i];
  });
}

Tensor stack_scalars(const std::vector<Tensor>& scalars, Shape shape) {
  if (numel(shape) != scalars.size()) {
    throw ShapeError("stack_scalars: " + std::to_string(scalars.size()) + " scalars for shape " +
                     to_string(shape));
  }
  std::vector<double> out(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = scalars[i].item();
  return make_result(std::move(shape), std::move(out), scalars, [](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += self.grad[i];
    }
  });
}

}  // namespace xdial::num
