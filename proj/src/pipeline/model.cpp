// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/pipeline/model.hpp"

#include "xdial/common/tokens.hpp"
#include "xdial/data/synth.hpp"

namespace xdial::pipeline {

Model::Model(RunConfig cfg, data::Vocabulary v)
    : config(std::move(cfg)), vocab(std::move(v)), store(config.seed) {
  validate(config);
  const std::size_t vocab_size = vocab.size();
  encoder = experts::MultimodalEncoder(store, "enc", config.encoder_config(vocab_size));
  heads = objectives::ObjectiveHeads(store, "heads", config.head_config(vocab_size));
  lm = generator::ToyLM(store, "lm", config.lm_config(vocab_size));
  coupling = generator::Coupling(store, "coupling", config.dim, config.lm_dim);
  // Start from float-representable values so checkpoints are lossless.
  num::PrecisionScope f32(num::Precision::f32);
  for (auto& p : store.params()) num::quantize_inplace(p.tensor.mutable_data());
}

std::vector<int> Model::answer(const experts::EncoderInput& input, const experts::RoutingMap& routing,
                               std::size_t max_len) const {
  num::NoGradGuard no_grad;
  return generator::greedy_decode(encoder.forward(input, routing), lm, coupling, max_len);
}

data::Vocabulary load_vocabulary(const RunConfig& cfg) {
  return cfg.vocab.empty() ? data::synthetic_vocabulary() : data::Vocabulary::load(cfg.vocab);
}

std::vector<int> answer_ids(const std::vector<int>& tokens) {
  std::vector<int> out = tokens;
  out.push_back(kEos);
  return out;
}

}  // namespace xdial::pipeline
