// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/numerics/nn.hpp"

#include <cmath>

#include "xdial/common/errors.hpp"

namespace xdial::num {

Tensor ParameterStore::add(const std::string& name, Tensor tensor) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, tensor, false});
  return tensor;
}

Tensor ParameterStore::normal(const std::string& name, Shape shape, double stddev) {
  return add(name, Tensor::randn(std::move(shape), rng_, stddev));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

void ParameterStore::set_frozen(std::string_view prefix, bool frozen) {
  for (auto& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) p.frozen = frozen;
  }
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               bool with_bias, double init_std) {
  weight = store.normal(name + ".weight", {in, out}, init_std);
  if (with_bias) bias = store.zeros(name + ".bias", {out});
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
  gain = store.ones(name + ".gain", {dim});
  bias = store.zeros(name + ".bias", {dim});
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       std::size_t dim, std::size_t heads)
    : query(store, name + ".query", dim, dim),
      key(store, name + ".key", dim, dim),
      value(store, name + ".value", dim, dim),
      output(store, name + ".output", dim, dim),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  head_dim_ = dim / heads;
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& kv_in,
                                      const Mask* mask) const {
  const Tensor q = query(q_in);
  const Tensor k = key(kv_in);
  const Tensor v = value(kv_in);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  std::vector<Tensor> per_head;
  per_head.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_dim_;
    const std::size_t hi = lo + head_dim_;
    Tensor scores = scale(matmul(slice_cols(q, lo, hi), transpose(slice_cols(k, lo, hi))), inv_sqrt);
    Tensor probs = mask ? masked_softmax(scores, *mask) : softmax(scores);
    per_head.push_back(matmul(probs, slice_cols(v, lo, hi)));
  }
  return output(heads_ == 1 ? per_head.front() : concat_cols(per_head));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t dim,
                         std::size_t hidden)
    : fc1(store, name + ".fc1", dim, hidden), fc2(store, name + ".fc2", hidden, dim) {}

}  // namespace xdial::num
