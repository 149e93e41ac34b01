// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/objectives/losses.hpp"

#include <cmath>

#include "xdial/common/errors.hpp"
#include "xdial/common/tokens.hpp"

namespace xdial::objectives {

using experts::ModalityBundle;
using experts::Stream;
using num::Tensor;

ProjectionHead::ProjectionHead(num::ParameterStore& store, const std::string& name,
                               std::size_t in, std::size_t out)
    : linear(store, name, in, out) {}

Temperature::Temperature(num::ParameterStore& store, const std::string& name, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  log_tau = store.constant(name, {}, std::log(tau));
}

double Temperature::value() const { return std::exp(log_tau.item()); }

Tensor Temperature::inverse() const { return num::exp(num::neg(log_tau)); }

Tensor pairwise_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) == 0 || b.dim(0) == 0) {
    throw ShapeError("pairwise_similarity needs two non-empty token sets, got " +
                     num::to_string(a.shape()) + " and " + num::to_string(b.shape()));
  }
  return num::max_all(num::matmul(a, num::transpose(b)));
}

Tensor contrastive_logits(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          const Temperature& tau) {
  const std::size_t k = a.size();
  if (k < 2 || b.size() != k) {
    throw ConfigError("contrastive loss needs K >= 2 matched pairs, got " + std::to_string(a.size()) +
                      " and " + std::to_string(b.size()));
  }
  std::vector<Tensor> sims;
  sims.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) sims.push_back(pairwise_similarity(a[i], b[j]));
  }
  return num::mul(num::stack_scalars(sims, {k, k}), tau.inverse());
}

Tensor contrastive_loss(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                        const Temperature& tau) {
  const Tensor logits = contrastive_logits(a, b, tau);
  std::vector<int> diag(a.size());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
  const Tensor targets = num::one_hot(diag, a.size());
  const Tensor a_to_b = num::cross_entropy(logits, targets);
  const Tensor b_to_a = num::cross_entropy(num::transpose(logits), targets);
  return num::scale(num::add(a_to_b, b_to_a), 0.5);
}

Tensor matching_loss(const std::vector<Tensor>& positive_cls, const std::vector<Tensor>& negative_cls,
                     const num::Linear& head) {
  if (positive_cls.size() < 2) {
    throw ConfigError("matching loss needs a batch of at least 2, got " +
                      std::to_string(positive_cls.size()));
  }
  std::vector<Tensor> rows = positive_cls;
  rows.insert(rows.end(), negative_cls.begin(), negative_cls.end());
  std::vector<int> labels(positive_cls.size(), 1);
  labels.resize(rows.size(), 0);
  return num::cross_entropy(head(num::concat_rows(rows)), num::one_hot(labels, 2));
}

std::vector<std::size_t> sample_negatives(std::size_t batch, num::Rng& rng) {
  if (batch < 2) throw ConfigError("negative sampling needs a batch of at least 2");
  std::vector<std::size_t> out(batch);
  std::uniform_int_distribution<std::size_t> dist(0, batch - 2);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = dist(rng);
    out[i] = j >= i ? j + 1 : j;
  }
  return out;
}

MaskedText mask_tokens(const std::vector<int>& ids, double rate, std::size_t vocab_size,
                       num::Rng& rng) {
  if (ids.empty()) throw DataError("cannot mask an empty caption");
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("mask rate must be in (0, 1]");
  MaskedText out;
  out.ids = ids;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> chosen(ids.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    chosen[i] = unit(rng) < rate;
    any = any || chosen[i];
  }
  if (!any) {
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    chosen[pick(rng)] = true;
  }
  const bool has_ordinary = vocab_size > static_cast<std::size_t>(kFirstOrdinary);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!chosen[i]) continue;
    out.positions.push_back(static_cast<int>(i));
    out.targets.push_back(ids[i]);
    const double u = unit(rng);
    if (u < 0.8 || !has_ordinary) {
      out.ids[i] = kMask;
    } else if (u < 0.9) {
      std::uniform_int_distribution<int> token(kFirstOrdinary, static_cast<int>(vocab_size) - 1);
      out.ids[i] = token(rng);
    }
  }
  return out;
}

Tensor mlm_loss(const Tensor& states, const MaskedText& masked, const num::Linear& head) {
  if (masked.positions.empty()) throw DataError("MLM needs at least one masked position");
  for (int p : masked.positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= states.dim(0)) {
      throw ShapeError("masked position " + std::to_string(p) + " outside caption of length " +
                       std::to_string(states.dim(0)));
    }
  }
  const Tensor logits = head(num::gather_rows(states, masked.positions));
  return num::cross_entropy(logits, num::one_hot(masked.targets, logits.dim(1)));
}

ObjectiveHeads::ObjectiveHeads(num::ParameterStore& store, const std::string& name,
                               HeadConfig config)
    : spatial(store, name + ".proj_spa", config.dim, config.projection_dim),
      temporal(store, name + ".proj_tmp", config.dim, config.projection_dim),
      visual(store, name + ".proj_vis", config.dim, config.projection_dim),
      text(store, name + ".proj_txt", config.dim, config.projection_dim),
      stc_tau(store, name + ".stc_log_tau"),
      vtc_tau(store, name + ".vtc_log_tau"),
      stm_head(store, name + ".stm", config.dim, 2),
      vtm_head(store, name + ".vtm", config.dim, 2),
      mlm_head(store, name + ".mlm", config.dim, config.vocab_size) {}

namespace {

Tensor visual_tokens(const ModalityBundle& b) {
  if (b.available(Stream::tmp)) return num::concat_rows({b[Stream::spa], b[Stream::tmp]});
  return b[Stream::spa];
}

}  // namespace

LossBreakdown stage1_loss(const experts::MultimodalEncoder& encoder, const ObjectiveHeads& heads,
                          const std::vector<experts::EncoderInput>& batch, bool is_video,
                          const LossToggles& toggles, num::Rng& rng, double mask_rate) {
  LossBreakdown out;
  std::vector<const experts::EncoderInput*> samples;
  for (const auto& s : batch) {
    if (s.caption.empty()) {
      ++out.skipped_captions;
    } else {
      samples.push_back(&s);
    }
  }
  const std::size_t k = samples.size();
  if (k < 2) {
    throw ConfigError("first-stage objectives need a batch of at least 2 captioned samples, got " +
                      std::to_string(k));
  }
  const bool temporal = is_video && encoder.config().stack.separate_spatial_temporal;
  const auto& stack = encoder.stack;

  std::vector<ModalityBundle> embedded;
  std::vector<experts::StackOutput> positive;
  for (const auto* s : samples) {
    embedded.push_back(encoder.embed(*s));
    if (temporal && !embedded.back().available(Stream::tmp)) {
      throw ConfigError("video batch without a temporal stream");
    }
    positive.push_back(stack.forward(embedded.back()));
  }

  std::vector<Tensor> terms;
  auto record = [&](const std::string& key, const Tensor& value) {
    out.terms[key] = value.item();
    terms.push_back(value);
  };

  if (temporal && toggles.stc) {
    std::vector<Tensor> a, b;
    for (const auto& p : positive) {
      a.push_back(heads.spatial(p.expert_end[Stream::spa]));
      b.push_back(heads.temporal(p.expert_end[Stream::tmp]));
    }
    record("stc", contrastive_loss(a, b, heads.stc_tau));
  }
  if (toggles.vtc) {
    std::vector<Tensor> a, b;
    for (const auto& p : positive) {
      a.push_back(heads.visual(visual_tokens(p.expert_end)));
      b.push_back(heads.text(p.expert_end[Stream::cap]));
    }
    record("vtc", contrastive_loss(a, b, heads.vtc_tau));
  }
  if (temporal && toggles.stm) {
    const auto partner = sample_negatives(k, rng);
    std::vector<Tensor> pos, neg;
    for (std::size_t i = 0; i < k; ++i) {
      pos.push_back(positive[i].cls);
      ModalityBundle mixed = embedded[i];
      // Alternate which side of the pair comes from the other video.
      if (i % 2 == 0) {
        mixed[Stream::tmp] = embedded[partner[i]][Stream::tmp];
      } else {
        mixed[Stream::spa] = embedded[partner[i]][Stream::spa];
      }
      neg.push_back(stack.forward(mixed).cls);
    }
    record("stm", matching_loss(pos, neg, heads.stm_head));
  }
  if (toggles.vtm) {
    const auto partner = sample_negatives(k, rng);
    std::vector<Tensor> pos, neg;
    for (std::size_t i = 0; i < k; ++i) {
      pos.push_back(positive[i].cls);
      ModalityBundle mixed = embedded[i];
      mixed[Stream::cap] = embedded[partner[i]][Stream::cap];
      neg.push_back(stack.forward(mixed).cls);
    }
    record("vtm", matching_loss(pos, neg, heads.vtm_head));
  }
  if (toggles.mlm) {
    std::vector<Tensor> per_sample;
    const std::size_t vocab = encoder.config().vocab_size;
    for (std::size_t i = 0; i < k; ++i) {
      const MaskedText masked = mask_tokens(samples[i]->caption, mask_rate, vocab, rng);
      ModalityBundle input = embedded[i];
      input[Stream::cap] = encoder.embed_text(masked.ids, false);
      const auto states = stack.forward(input).final[Stream::cap];
      MaskedText kept = masked;
      // Positions past the encoder's text limit were truncated away.
      kept.positions.clear();
      kept.targets.clear();
      for (std::size_t m = 0; m < masked.positions.size(); ++m) {
        if (static_cast<std::size_t>(masked.positions[m]) < states.dim(0)) {
          kept.positions.push_back(masked.positions[m]);
          kept.targets.push_back(masked.targets[m]);
        }
      }
      if (kept.positions.empty()) continue;
      per_sample.push_back(mlm_loss(states, kept, heads.mlm_head));
    }
    if (!per_sample.empty()) {
      record("mlm", num::scale(num::sum(num::stack_scalars(per_sample, {per_sample.size()})),
                               1.0 / static_cast<double>(per_sample.size())));
    }
  }
  if (terms.empty()) throw ConfigError("every first-stage objective is disabled");
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = num::add(total, terms[i]);
  out.total = total;
  return out;
}

}  // namespace xdial::objectives
