// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/data/batching.hpp"

#include <algorithm>
#include <random>

#include "xdial/common/errors.hpp"

namespace xdial::data {

BatchPlan plan_batches(const Dataset& data, const BatchOptions& options, std::size_t epoch) {
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (options.contrastive && options.batch_size < 2) {
    throw ConfigError("contrastive batches need batch size >= 2");
  }
  std::vector<std::size_t> videos, images;
  for (std::size_t i = 0; i < data.size(); ++i) (data.is_video(i) ? videos : images).push_back(i);
  if (options.shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(videos.begin(), videos.end(), rng);
    std::shuffle(images.begin(), images.end(), rng);
  }
  BatchPlan plan;
  auto chunk = [&](const std::vector<std::size_t>& ids) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < ids.size(); s += options.batch_size) {
      std::vector<std::size_t> b(ids.begin() + static_cast<std::ptrdiff_t>(s),
                                 ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), s + options.batch_size)));
      if (options.contrastive && b.size() < 2) {
        plan.rejected += b.size();
        continue;
      }
      out.push_back(std::move(b));
    }
    return out;
  };
  const auto v = chunk(videos);
  const auto im = chunk(images);
  for (std::size_t k = 0; k < std::max(v.size(), im.size()); ++k) {
    if (k < v.size()) plan.batches.push_back(v[k]);
    if (k < im.size()) plan.batches.push_back(im[k]);
  }
  return plan;
}

experts::EncoderInput Batch::encoder_input(std::size_t i) const {
  experts::EncoderInput in;
  in.frames = frames.at(i);
  if (availability[experts::index(experts::Stream::cap)]) in.caption = captions.at(i);
  if (availability[experts::index(experts::Stream::ctx)]) in.context = contexts.at(i);
  in.availability = availability;
  return in;
}

std::vector<experts::EncoderInput> Batch::encoder_inputs() const {
  std::vector<experts::EncoderInput> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(encoder_input(i));
  return out;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices, const BatchShape& shape,
                 const Vocabulary& vocab) {
  if (indices.empty()) throw DataError("empty batch request");
  Batch b;
  b.indices = indices;
  b.is_video = data.is_video(indices[0]);
  for (std::size_t i : indices) {
    if (data.is_video(i) != b.is_video) {
      throw DataError("mixed-modality batch: sample " + std::to_string(i) + " is " +
                      (data.is_video(i) ? "a video" : "an image") + " but sample " +
                      std::to_string(indices[0]) + " is not");
    }
  }
  b.availability = experts::availability_for(shape.stage, b.is_video);
  for (std::size_t i : indices) {
    const std::string path = data.visual_path(i);
    num::Tensor frames = load_frames(path, b.is_video ? shape.frames : 1);
    if (b.is_video && frames.dim(0) != shape.frames) {
      throw DataError(path + ": video has " + std::to_string(frames.dim(0)) + " frames, need " +
                      std::to_string(shape.frames));
    }
    if (!b.is_video && frames.dim(0) != 1) {
      throw DataError(path + ": image payload must hold exactly one frame");
    }
    if (frames.dim(2) != shape.image_size || frames.dim(3) != shape.image_size) {
      throw DataError(path + ": frames are " + std::to_string(frames.dim(2)) + "x" +
                      std::to_string(frames.dim(3)) + ", model expects " + std::to_string(shape.image_size));
    }
    b.frames.push_back(std::move(frames));
    b.captions.push_back(tokenize(data.caption(i), vocab));
    if (data.schema == Schema::dialog) {
      const DialogSample& s = data.dialogs[i];
      b.contexts.push_back(tokenize(build_context(s, shape.context_budget), vocab));
      b.answers.push_back(tokenize(s.answer, vocab));
      b.candidates.push_back(s.candidates);
      b.gt_index.push_back(s.gt_index);
      b.relevance.push_back(s.relevance);
    } else {
      b.contexts.emplace_back();
      b.answers.emplace_back();
      b.candidates.emplace_back();
      b.gt_index.emplace_back();
      b.relevance.emplace_back();
    }
  }
  return b;
}

std::vector<Batch> make_batches(const Dataset& data, const BatchOptions& options, std::size_t epoch,
                                const BatchShape& shape, const Vocabulary& vocab, std::size_t* rejected) {
  const BatchPlan plan = plan_batches(data, options, epoch);
  if (rejected) *rejected = plan.rejected;
  std::vector<Batch> out;
  out.reserve(plan.batches.size());
  for (const auto& idx : plan.batches) out.push_back(make_batch(data, idx, shape, vocab));
  return out;
}

}  // namespace xdial::data
