// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xdial/numerics/nn.hpp"

namespace xdial::num {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// Global L2 norm of the gradients of the non-frozen parameters.
double grad_norm(const std::vector<Parameter*>& params);
// Rescales gradients so their global norm is at most max_norm.
// Returns the norm measured before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

// AdamW with decoupled weight decay. Frozen parameters, and parameters that
// received no gradient, are skipped entirely.
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit AdamW(AdamWConfig config = {});

  // Clips, then applies one update. Returns the pre-clip gradient norm.
  double step(const std::vector<Parameter*>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamWConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace xdial::num
