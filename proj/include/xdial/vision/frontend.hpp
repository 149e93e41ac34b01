// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include "xdial/numerics/nn.hpp"

namespace xdial::vision {

// Attention masks over frame-major visual tokens: token (f, p) sits at index
// f * P + p. Spatial attention keeps tokens of the same frame, temporal
// attention keeps tokens at the same patch position.
struct AttentionMasks {
  num::Mask spatial;
  num::Mask temporal;
};

AttentionMasks build_masks(std::size_t frames, std::size_t patches);

// Shared, lazily built masks per (frames, patches). Safe to call concurrently.
std::shared_ptr<const AttentionMasks> cached_masks(std::size_t frames, std::size_t patches);

struct VisualTokens {
  num::Tensor tokens;  // [F, P, D]
  std::size_t num_frames = 0;
  std::size_t patches_per_frame = 0;
  std::shared_ptr<const AttentionMasks> masks;

  const num::Mask& spatial_mask() const { return masks->spatial; }
  const num::Mask& temporal_mask() const { return masks->temporal; }
  std::size_t width() const { return tokens.shape().back(); }
  // [F * P, D] view in frame-major order.
  num::Tensor flat() const;
};

struct PatchEmbedderConfig {
  std::size_t patch_size = 14;
  std::size_t channels = 3;
  std::size_t embed_width = 32;  // per raw patch, before 2x2 concatenation
  std::size_t dim = 64;          // D
  bool with_bias = true;
};

// Linear patch projector: each raw patch is embedded, every 2x2 block of
// adjacent patches (row-major within and across blocks) is concatenated, and
// the concatenation is projected to D.
class PatchEmbedder {
 public:
  PatchEmbedder() = default;
  PatchEmbedder(num::ParameterStore& store, const std::string& name, PatchEmbedderConfig config);

  const PatchEmbedderConfig& config() const { return config_; }
  // Throws ShapeError unless height and width are multiples of 2 * patch_size.
  std::size_t patches_per_frame(std::size_t height, std::size_t width) const;

  num::Linear embed;
  num::Linear projection;

 private:
  PatchEmbedderConfig config_;
};

// frames: [F, C, H, W].
VisualTokens embed_frames(const num::Tensor& frames, const PatchEmbedder& embedder);

// Separate spatial and temporal self-attention over the same visual tokens.
// Each pass is layer norm followed by masked multi-head attention.
class PreAttention {
 public:
  struct Output {
    num::Tensor spatial;   // [F * P, D]
    num::Tensor temporal;  // [F * P, D]
  };

  PreAttention() = default;
  PreAttention(num::ParameterStore& store, const std::string& name, std::size_t dim,
               std::size_t heads);

  Output operator()(const VisualTokens& tokens) const;
  // Divided space-time attention in series (ablation): residual spatial pass,
  // then residual temporal pass on its output.
  num::Tensor sequential(const VisualTokens& tokens) const;

  num::LayerNorm spatial_norm;
  num::MultiHeadAttention spatial_attention;
  num::LayerNorm temporal_norm;
  num::MultiHeadAttention temporal_attention;
};

}  // namespace xdial::vision
