// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "xdial/experts/stack.hpp"
#include "xdial/vision/frontend.hpp"

namespace xdial::experts {

struct EncoderConfig {
  std::size_t frames = 4;       // F
  std::size_t image_size = 56;  // 224 at full scale
  std::size_t patch_size = 14;
  std::size_t patch_embed_width = 32;
  std::size_t vocab_size = 64;
  std::size_t max_text_len = 64;  // per text stream
  ExpertStackConfig stack;
};

// One sample as seen by the encoder. frames is [F', 3, H, W] with F' = 1 for
// images; text streams are token ids without BOS/EOS.
struct EncoderInput {
  num::Tensor frames;
  std::vector<int> caption;
  std::vector<int> context;
  Availability availability{};
};

// Visual tokenizer, masked pre-attention, text embeddings and the expert stack.
class MultimodalEncoder {
 public:
  MultimodalEncoder() = default;
  MultimodalEncoder(num::ParameterStore& store, const std::string& name, EncoderConfig config);

  const EncoderConfig& config() const { return config_; }

  // Embeds the available streams of one sample, ready for the stack.
  ModalityBundle embed(const EncoderInput& input) const;
  num::Tensor embed_text(const std::vector<int>& ids, bool keep_tail) const;

  StackOutput forward(const EncoderInput& input, RoutingAudit* audit = nullptr) const {
    return stack.forward(embed(input), audit);
  }
  StackOutput forward(const EncoderInput& input, const RoutingMap& routing,
                      RoutingAudit* audit = nullptr) const {
    return stack.forward(embed(input), routing, audit);
  }

  vision::PatchEmbedder patches;
  num::Tensor frame_position;  // [F, D]
  num::Tensor patch_position;  // [P, D]
  vision::PreAttention pre_attention;
  num::Tensor token_embedding;  // [vocab, D]
  num::Tensor text_position;    // [max_text_len, D]
  ExpertStack stack;

 private:
  EncoderConfig config_;
};

}  // namespace xdial::experts
