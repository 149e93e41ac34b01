// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xdial/numerics/tensor.hpp"

namespace xdial::num {

struct GradcheckOptions {
  // Precision of the analytic (backward) pass. The finite-difference reference
  // always runs in f64 on the same input values.
  Precision analytic = Precision::f64;
  double step = 1e-6;
  double tolerance = 1e-6;
};

struct GradcheckResult {
  // |g_a - g_fd|_2 / max(|g_a|_2, |g_fd|_2) over all inputs' gradients jointly.
  double max_rel_error = 0.0;
  bool ok = false;
  std::string worst_input;  // element with the largest absolute deviation
};

// Compares backward() of the scalar returned by f against central differences,
// perturbing every element of every tensor in inputs.
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options = {});

// Rounds every value in t to float (in place), so a tensor built in f64 can be
// used as the input of a 32-bit check.
void round_to_float(Tensor& t);

}  // namespace xdial::num
