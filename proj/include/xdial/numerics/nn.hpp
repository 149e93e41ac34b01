// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xdial/numerics/ops.hpp"
#include "xdial/numerics/tensor.hpp"

namespace xdial::num {

struct Parameter {
  std::string name;  // hierarchical, dot separated
  Tensor tensor;
  bool frozen = false;
};

// Owns every trainable tensor of a model in creation order. Layers keep
// Tensor handles that share nodes with the stored parameters.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor normal(const std::string& name, Shape shape, double stddev);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor zeros(const std::string& name, Shape shape) { return constant(name, std::move(shape), 0.0); }
  Tensor ones(const std::string& name, Shape shape) { return constant(name, std::move(shape), 1.0); }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  // Marks every parameter whose name starts with prefix.
  void set_frozen(std::string_view prefix, bool frozen);
  std::vector<Parameter*> with_prefix(std::string_view prefix);
  void zero_grad();
  std::size_t total_size() const;

  Rng& rng() { return rng_; }

 private:
  Tensor add(const std::string& name, Tensor tensor);

  Rng rng_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kInitStd = 0.02;

// y = x W + b with W stored as [in, out].
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true, double init_std = kInitStd);

  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;  // undefined when constructed without bias
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  Tensor gain;
  Tensor bias;
};

// Multi-head scaled dot-product attention over row-token matrices.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                     std::size_t heads);

  Tensor operator()(const Tensor& x, const Mask* mask = nullptr) const {
    return (*this)(x, x, mask);
  }
  // Queries from q_in, keys/values from kv_in.
  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, const Mask* mask) const;

  std::size_t heads() const { return heads_; }

  Linear query;
  Linear key;
  Linear value;
  Linear output;

 private:
  std::size_t heads_ = 1;
  std::size_t head_dim_ = 0;
};

// Two linear maps with a GELU between: dim -> hidden -> dim.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

  Linear fc1;
  Linear fc2;
};

}  // namespace xdial::num
