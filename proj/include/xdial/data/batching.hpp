// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xdial/data/samples.hpp"
#include "xdial/experts/encoder.hpp"

namespace xdial::data {

struct BatchOptions {
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Contrastive batches need at least two samples; shorter ones are dropped.
  bool contrastive = false;
};

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // dataset indices, one modality per batch
  std::size_t rejected = 0;                       // samples in dropped short batches
};

// Groups videos and images separately, shuffles each group with a generator
// seeded from (seed, epoch) and interleaves the resulting batches, videos first.
BatchPlan plan_batches(const Dataset& data, const BatchOptions& options, std::size_t epoch);

struct BatchShape {
  int stage = 1;
  std::size_t frames = 4;       // F
  std::size_t image_size = 56;  // frames must already be this size
  std::size_t context_budget = 0;  // history words kept in the context, 0 = unlimited
};

struct Batch {
  std::vector<std::size_t> indices;
  bool is_video = false;
  experts::Availability availability{};
  std::vector<num::Tensor> frames;  // [F, 3, H, W] per video, [1, 3, H, W] per image
  std::vector<std::vector<int>> captions;
  std::vector<std::vector<int>> contexts;
  std::vector<std::vector<int>> answers;
  std::vector<std::vector<std::string>> candidates;  // empty rows for samples without any
  std::vector<std::optional<int>> gt_index;
  std::vector<std::vector<double>> relevance;

  std::size_t size() const { return indices.size(); }
  // Text rows right-padded with PAD to the longest row of the batch.
  std::vector<std::vector<int>> padded_captions() const { return pad_sequences(captions); }
  std::vector<std::vector<int>> padded_contexts() const { return pad_sequences(contexts); }
  experts::EncoderInput encoder_input(std::size_t i) const;
  std::vector<experts::EncoderInput> encoder_inputs() const;
};

// Loads frames and tokenizes text for one planned batch. Raises DataError for
// mixed-modality requests and for payloads of the wrong size.
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices, const BatchShape& shape,
                 const Vocabulary& vocab);

std::vector<Batch> make_batches(const Dataset& data, const BatchOptions& options, std::size_t epoch,
                                const BatchShape& shape, const Vocabulary& vocab,
                                std::size_t* rejected = nullptr);

}  // namespace xdial::data
