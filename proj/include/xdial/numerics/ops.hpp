// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "xdial/numerics/tensor.hpp"

namespace xdial::num {

// Dense boolean matrix. A mask with one row broadcasts over every logit row.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false);

  static Mask identity(std::size_t n);
  static Mask causal(std::size_t n);
  static Mask from_rows(const std::vector<std::vector<int>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool value) { bits_[r * cols_ + c] = value ? 1 : 0; }

  bool is_symmetric() const;
  std::size_t row_count(std::size_t r) const;
  Mask operator&(const Mask& other) const;
  friend bool operator==(const Mask& a, const Mask& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Elementwise arithmetic. The smaller operand may be a scalar or a trailing
// suffix of the larger operand's shape (bias-style broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);

// [..., M, K] x [K, N] (broadcast) or [..., M, K] x [..., K, N] (matching batch).
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& logits);
// Softmax over the last axis where disallowed entries get exactly zero
// probability. Throws NumericError on a row with no allowed entry.
Tensor masked_softmax(const Tensor& logits, const Mask& mask);
Tensor log_softmax(const Tensor& logits);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

enum class CeInput { logits, probabilities };
// Mean over rows of -sum(y * log p). Targets must be distributions over the
// last axis (rows sum to 1 within 1e-6, entries non-negative).
Tensor cross_entropy(const Tensor& input, const Tensor& targets,
                     CeInput kind = CeInput::logits);
Tensor one_hot(const std::vector<int>& classes, std::size_t num_classes);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Maximum over every element; the gradient goes to the first maximiser.
Tensor max_all(const Tensor& a);

// 2-D helpers.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
// out[i] = table[ids[i]]; also serves as row selection.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor mean_rows(const Tensor& a);
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

// out.flat[i] = a.flat[source[i]]; gradients scatter back. Used for patch
// extraction and other pure re-indexing.
Tensor take(const Tensor& a, std::vector<std::size_t> source, Shape shape);

// Packs scalar tensors into one tensor of the given shape.
Tensor stack_scalars(const std::vector<Tensor>& scalars, Shape shape);

}  // namespace xdial::num
