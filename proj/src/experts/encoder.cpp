// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/experts/encoder.hpp"

#include <numeric>

#include "xdial/common/errors.hpp"

namespace xdial::experts {

using num::Tensor;

MultimodalEncoder::MultimodalEncoder(num::ParameterStore& store, const std::string& name,
                                     EncoderConfig config)
    : config_(config) {
  const std::size_t d = config.stack.dim;
  vision::PatchEmbedderConfig pcfg;
  pcfg.patch_size = config.patch_size;
  pcfg.embed_width = config.patch_embed_width;
  pcfg.dim = d;
  patches = vision::PatchEmbedder(store, name + ".patch", pcfg);
  const std::size_t p = patches.patches_per_frame(config.image_size, config.image_size);
  frame_position = store.normal(name + ".frame_pos", {config.frames, d}, num::kInitStd);
  patch_position = store.normal(name + ".patch_pos", {p, d}, num::kInitStd);
  pre_attention = vision::PreAttention(store, name + ".pre", d, config.stack.heads);
  token_embedding = store.normal(name + ".tok", {config.vocab_size, d}, num::kInitStd);
  text_position = store.normal(name + ".text_pos", {config.max_text_len, d}, num::kInitStd);
  stack = ExpertStack(store, name + ".stack", config.stack);
}

Tensor MultimodalEncoder::embed_text(const std::vector<int>& ids, bool keep_tail) const {
  if (ids.empty()) throw DataError("text stream is empty");
  const std::size_t n = std::min(ids.size(), config_.max_text_len);
  std::vector<int> kept = keep_tail ? std::vector<int>(ids.end() - n, ids.end())
                                    : std::vector<int>(ids.begin(), ids.begin() + n);
  for (int id : kept) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  return num::add(num::gather_rows(token_embedding, kept), num::gather_rows(text_position, positions));
}

ModalityBundle MultimodalEncoder::embed(const EncoderInput& input) const {
  const auto& av = input.availability;
  ModalityBundle bundle;
  if (av[index(Stream::spa)] || av[index(Stream::tmp)]) {
    const Tensor& frames = input.frames;
    if (!frames.defined() || frames.rank() != 4) {
      throw ShapeError("visual input must be [F, 3, H, W]");
    }
    const std::size_t f = frames.dim(0);
    if (f > config_.frames) {
      throw ShapeError("visual input has " + std::to_string(f) + " frames, model supports " +
                       std::to_string(config_.frames));
    }
    vision::VisualTokens tokens = vision::embed_frames(frames, patches);
    const std::size_t p = tokens.patches_per_frame;
    if (p != patch_position.dim(0)) {
      throw ShapeError("frame size gives " + std::to_string(p) + " patches per frame, expected " +
                       std::to_string(patch_position.dim(0)));
    }
    std::vector<int> frame_ids(f * p);
    std::vector<int> patch_ids(f * p);
    for (std::size_t i = 0; i < f * p; ++i) {
      frame_ids[i] = static_cast<int>(i / p);
      patch_ids[i] = static_cast<int>(i % p);
    }
    const Tensor positioned =
        num::add(tokens.flat(), num::add(num::gather_rows(frame_position, frame_ids),
                                         num::gather_rows(patch_position, patch_ids)));
    tokens.tokens = num::reshape(positioned, {f, p, config_.stack.dim});
    if (config_.stack.separate_spatial_temporal) {
      auto out = pre_attention(tokens);
      if (av[index(Stream::spa)]) bundle[Stream::spa] = out.spatial;
      if (av[index(Stream::tmp)]) bundle[Stream::tmp] = out.temporal;
    } else {
      bundle[Stream::spa] = pre_attention.sequential(tokens);
    }
  }
  if (av[index(Stream::cap)]) bundle[Stream::cap] = embed_text(input.caption, false);
  if (av[index(Stream::ctx)]) bundle[Stream::ctx] = embed_text(input.context, true);
  return bundle;
}

}  // namespace xdial::experts
