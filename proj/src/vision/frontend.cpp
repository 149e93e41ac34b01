// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/vision/frontend.hpp"

#include <map>
#include <mutex>

#include "xdial/common/errors.hpp"

namespace xdial::vision {

using num::Tensor;

AttentionMasks build_masks(std::size_t frames, std::size_t patches) {
  const std::size_t n = frames * patches;
  AttentionMasks masks{num::Mask(n, n), num::Mask(n, n)};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      masks.spatial.set(a, b, a / patches == b / patches);
      masks.temporal.set(a, b, a % patches == b % patches);
    }
  }
  return masks;
}

std::shared_ptr<const AttentionMasks> cached_masks(std::size_t frames, std::size_t patches) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const AttentionMasks>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{frames, patches}];
  if (!slot) slot = std::make_shared<const AttentionMasks>(build_masks(frames, patches));
  return slot;
}

Tensor VisualTokens::flat() const {
  return num::reshape(tokens, {num_frames * patches_per_frame, width()});
}

PatchEmbedder::PatchEmbedder(num::ParameterStore& store, const std::string& name,
                             PatchEmbedderConfig config)
    : embed(store, name + ".embed", config.channels * config.patch_size * config.patch_size,
            config.embed_width, config.with_bias),
      projection(store, name + ".projection", 4 * config.embed_width, config.dim,
                 config.with_bias),
      config_(config) {}

std::size_t PatchEmbedder::patches_per_frame(std::size_t height, std::size_t width) const {
  const std::size_t block = 2 * config_.patch_size;
  if (height == 0 || width == 0 || height % block != 0 || width % block != 0) {
    throw ShapeError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be a multiple of 2*patch_size = " + std::to_string(block) +
                     " in both dimensions");
  }
  return (height * width) / (4 * config_.patch_size * config_.patch_size);
}

VisualTokens embed_frames(const Tensor& frames, const PatchEmbedder& embedder) {
  const auto& cfg = embedder.config();
  if (frames.rank() != 4 || frames.dim(1) != cfg.channels) {
    throw ShapeError("embed_frames expects [F, " + std::to_string(cfg.channels) +
                     ", H, W] pixels, got " + num::to_string(frames.shape()));
  }
  const std::size_t f = frames.dim(0);
  const std::size_t c = cfg.channels;
  const std::size_t h = frames.dim(2);
  const std::size_t w = frames.dim(3);
  const std::size_t p = embedder.patches_per_frame(h, w);
  const std::size_t ps = cfg.patch_size;
  const std::size_t rows = h / ps;
  const std::size_t cols = w / ps;
  const std::size_t patch_len = c * ps * ps;

  // Raw patches, frame-major then row-major; each flattened as [C, ps, ps].
  std::vector<std::size_t> src;
  src.reserve(f * rows * cols * patch_len);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t pr = 0; pr < rows; ++pr)
      for (std::size_t pc = 0; pc < cols; ++pc)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < ps; ++y)
            for (std::size_t x = 0; x < ps; ++x)
              src.push_back(((fi * c + ch) * h + pr * ps + y) * w + pc * ps + x);
  Tensor patches = num::take(frames, std::move(src), {f * rows * cols, patch_len});
  Tensor embedded = embedder.embed(patches);

  // 2x2 blocks of embedded patches concatenated along features.
  const std::size_t e = cfg.embed_width;
  std::vector<std::size_t> block_src;
  block_src.reserve(f * p * 4 * e);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t br = 0; br < rows / 2; ++br)
      for (std::size_t bc = 0; bc < cols / 2; ++bc)
        for (std::size_t k = 0; k < 4; ++k) {
          const std::size_t raw = fi * rows * cols + (2 * br + k / 2) * cols + 2 * bc + k % 2;
          for (std::size_t d = 0; d < e; ++d) block_src.push_back(raw * e + d);
        }
  Tensor blocks = num::take(embedded, std::move(block_src), {f * p, 4 * e});
  Tensor projected = embedder.projection(blocks);

  VisualTokens out;
  out.tokens = num::reshape(projected, {f, p, cfg.dim});
  out.num_frames = f;
  out.patches_per_frame = p;
  out.masks = cached_masks(f, p);
  return out;
}

PreAttention::PreAttention(num::ParameterStore& store, const std::string& name, std::size_t dim,
                           std::size_t heads)
    : spatial_norm(store, name + ".spatial.norm", dim),
      spatial_attention(store, name + ".spatial.attn", dim, heads),
      temporal_norm(store, name + ".temporal.norm", dim),
      temporal_attention(store, name + ".temporal.attn", dim, heads) {}

PreAttention::Output PreAttention::operator()(const VisualTokens& tokens) const {
  const Tensor v = tokens.flat();
  return {spatial_attention(spatial_norm(v), &tokens.spatial_mask()),
          temporal_attention(temporal_norm(v), &tokens.temporal_mask())};
}

Tensor PreAttention::sequential(const VisualTokens& tokens) const {
  const Tensor v = tokens.flat();
  const Tensor h = num::add(v, spatial_attention(spatial_norm(v), &tokens.spatial_mask()));
  return num::add(h, temporal_attention(temporal_norm(h), &tokens.temporal_mask()));
}

}  // namespace xdial::vision
