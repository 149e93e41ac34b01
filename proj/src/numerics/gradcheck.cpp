// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "xdial/common/errors.hpp"

namespace xdial::num {

void round_to_float(Tensor& t) {
  for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
}

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    PrecisionScope scope(options.analytic);
    Tensor loss = f();
    backward(loss);
    for (auto& in : inputs) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
      if (analytic.back().empty()) analytic.back().assign(in.numel(), 0.0);
      in.zero_grad();
    }
  }

  GradcheckResult result;
  PrecisionScope scope(Precision::f64);
  NoGradGuard no_grad;
  double diff = 0.0;
  double norm_a = 0.0;
  double norm_n = 0.0;
  double worst_abs = -1.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      const double h = options.step * std::max(1.0, std::abs(saved));
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      diff += (a - numeric) * (a - numeric);
      norm_a += a * a;
      norm_n += numeric * numeric;
      if (std::abs(a - numeric) > worst_abs) {
        worst_abs = std::abs(a - numeric);
        result.worst_input = "input " + std::to_string(t) + " " + to_string(inputs[t].shape()) +
                             " element " + std::to_string(i);
      }
    }
  }
  const double denom = std::sqrt(std::max(norm_a, norm_n));
  result.max_rel_error = denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
  result.ok = result.max_rel_error <= options.tolerance;
  return result;
}

}  // namespace xdial::num
