// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xdial/data/batching.hpp"
#include "xdial/pipeline/config.hpp"

namespace xdial::pipeline {

// Every trainable part of the system in one parameter store:
// "enc." expert encoder, "heads." first-stage heads, "lm." language model,
// "coupling." linear map between the two.
class Model {
 public:
  Model(RunConfig config, data::Vocabulary vocab);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  RunConfig config;
  data::Vocabulary vocab;
  num::ParameterStore store;
  experts::MultimodalEncoder encoder;
  objectives::ObjectiveHeads heads;
  generator::ToyLM lm;
  generator::Coupling coupling;

  // Greedy answer for one sample, optionally with swapped experts.
  std::vector<int> answer(const experts::EncoderInput& input, const experts::RoutingMap& routing,
                          std::size_t max_len) const;
};

// Vocabulary named by the config, or the built-in synthetic one.
data::Vocabulary load_vocabulary(const RunConfig& cfg);

// Answer ids followed by EOS, as the generator expects.
std::vector<int> answer_ids(const std::vector<int>& tokens);

}  // namespace xdial::pipeline
