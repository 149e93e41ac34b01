// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/numerics/optim.hpp"

#include <cmath>

#include "xdial/common/errors.hpp"

namespace xdial::num {

double grad_norm(const std::vector<Parameter*>& params) {
  double ss = 0.0;
  for (const Parameter* p : params) {
    if (p->frozen || !p->tensor.has_grad()) continue;
    for (double g : p->tensor.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      if (p->frozen || !p->tensor.has_grad()) continue;
      for (double& g : p->tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

AdamW::AdamW(AdamWConfig config) : config_(config) {
  if (config_.weight_decay < 0.0) throw ConfigError("AdamW: negative weight decay");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("AdamW: betas must lie in [0, 1)");
  }
}

double AdamW::step(const std::vector<Parameter*>& params, double lr) {
  if (lr < 0.0 || !std::isfinite(lr)) throw ConfigError("AdamW: learning rate must be >= 0");
  const double norm = clip_grad_norm(params, config_.clip_norm);
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (Parameter* p : params) {
    if (p->frozen || !p->tensor.has_grad()) continue;
    auto& mom = moments_[p->name];
    auto values = p->tensor.mutable_data();
    const auto grads = p->tensor.grad();
    if (mom.m.size() != values.size()) {
      mom.m.assign(values.size(), 0.0);
      mom.v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      mom.m[i] = quantize(config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g);
      mom.v[i] = quantize(config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g);
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      double w = values[i] * (1.0 - lr * config_.weight_decay);
      w -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      values[i] = quantize(w);
    }
  }
  return norm;
}

}  // namespace xdial::num
