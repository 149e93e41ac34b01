// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "xdial/experts/encoder.hpp"

namespace xdial::objectives {

// Linear map to the projection width followed by L2 normalization per row.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(num::ParameterStore& store, const std::string& name, std::size_t in,
                 std::size_t out);

  num::Tensor operator()(const num::Tensor& x) const { return num::l2_normalize_rows(linear(x)); }

  num::Linear linear;
};

// Learnable temperature stored as log(tau) so tau stays positive.
class Temperature {
 public:
  static constexpr double kInitial = 0.07;

  Temperature() = default;
  Temperature(num::ParameterStore& store, const std::string& name, double tau = kInitial);

  double value() const;
  num::Tensor inverse() const;  // scalar 1 / tau, differentiable

  num::Tensor log_tau;
};

// Maximum dot product over all token pairs of two projected token sets.
num::Tensor pairwise_similarity(const num::Tensor& a, const num::Tensor& b);

// Symmetric InfoNCE over K matched pairs: logits[i][j] = sim(a_i, b_j) / tau,
// averaged cross-entropy of rows (a->b) and columns (b->a) against the diagonal.
num::Tensor contrastive_loss(const std::vector<num::Tensor>& a, const std::vector<num::Tensor>& b,
                             const Temperature& tau);
// K x K similarity logits (already divided by tau).
num::Tensor contrastive_logits(const std::vector<num::Tensor>& a,
                               const std::vector<num::Tensor>& b, const Temperature& tau);

// Two-class cross-entropy on classification states: positives have label 1,
// negatives label 0. Needs at least two positives.
num::Tensor matching_loss(const std::vector<num::Tensor>& positive_cls,
                          const std::vector<num::Tensor>& negative_cls, const num::Linear& head);

// In-batch negative partner for each index: uniform over j != i.
std::vector<std::size_t> sample_negatives(std::size_t batch, num::Rng& rng);

struct MaskedText {
  std::vector<int> ids;            // input with replacements applied
  std::vector<int> positions;      // masked positions
  std::vector<int> targets;        // original ids at those positions
};

inline constexpr double kMaskRate = 0.15;

// Selects about rate * n positions (at least one); each becomes MASK with
// probability 0.8, a random ordinary token with 0.1, or stays with 0.1.
MaskedText mask_tokens(const std::vector<int>& ids, double rate, std::size_t vocab_size,
                       num::Rng& rng);

// Cross-entropy over the vocabulary at the masked positions of states [n, D].
num::Tensor mlm_loss(const num::Tensor& states, const MaskedText& masked, const num::Linear& head);

struct LossToggles {
  bool stc = true;
  bool stm = true;
  bool vtc = true;
  bool vtm = true;
  bool mlm = true;
};

struct HeadConfig {
  std::size_t dim = 64;
  std::size_t projection_dim = 32;  // 256 at full scale
  std::size_t vocab_size = 64;
};

// Heads and temperatures used by the first-stage objectives.
struct ObjectiveHeads {
  ObjectiveHeads() = default;
  ObjectiveHeads(num::ParameterStore& store, const std::string& name, HeadConfig config);

  ProjectionHead spatial;
  ProjectionHead temporal;
  ProjectionHead visual;
  ProjectionHead text;
  Temperature stc_tau;
  Temperature vtc_tau;
  num::Linear stm_head;
  num::Linear vtm_head;
  num::Linear mlm_head;
};

struct LossBreakdown {
  num::Tensor total;                    // scalar, sum of enabled terms
  std::map<std::string, double> terms;  // per-objective values
  std::size_t skipped_captions = 0;     // empty captions left out of MLM
};

// First-stage objectives on a batch of same-modality samples. Videos get all
// five terms; images skip STC and STM.
LossBreakdown stage1_loss(const experts::MultimodalEncoder& encoder, const ObjectiveHeads& heads,
                          const std::vector<experts::EncoderInput>& batch, bool is_video,
                          const LossToggles& toggles, num::Rng& rng, double mask_rate = kMaskRate);

}  // namespace xdial::objectives
