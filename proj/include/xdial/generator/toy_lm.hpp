// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "xdial/experts/stack.hpp"

namespace xdial::generator {

struct ToyLMConfig {
  std::size_t vocab_size = 64;
  std::size_t dim = 64;  // d_lm (1024 at full scale)
  std::size_t heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t ffn_multiplier = 4;
  std::size_t max_source_len = 256;
  std::size_t max_target_len = 32;  // including EOS
};

// Small pre-norm encoder-decoder transformer with a shared token embedding.
class ToyLM {
 public:
  ToyLM() = default;
  ToyLM(num::ParameterStore& store, const std::string& name, ToyLMConfig config);

  const ToyLMConfig& config() const { return config_; }

  // inputs: [n, d_lm] already embedded; adds source positions.
  num::Tensor encode(const num::Tensor& inputs) const;
  // Embeds token ids and encodes them (truncated to max_source_len).
  num::Tensor encode_tokens(const std::vector<int>& ids) const;
  // Teacher-forced logits [T, vocab] for decoder input tokens.
  num::Tensor decode(const num::Tensor& memory, const std::vector<int>& decoder_input) const;

  struct EncoderLayer {
    num::LayerNorm attention_norm;
    num::MultiHeadAttention attention;
    num::LayerNorm ffn_norm;
    num::FeedForward ffn;
  };
  struct DecoderLayer {
    num::LayerNorm self_norm;
    num::MultiHeadAttention self_attention;
    num::LayerNorm cross_norm;
    num::MultiHeadAttention cross_attention;
    num::LayerNorm ffn_norm;
    num::FeedForward ffn;
  };

  num::Tensor embedding;        // [vocab, d_lm], shared by encoder and decoder
  num::Tensor source_position;  // [max_source_len, d_lm]
  num::Tensor target_position;  // [max_target_len, d_lm]
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  num::LayerNorm encoder_norm;
  num::LayerNorm decoder_norm;
  num::Linear output;  // vocabulary projection

 private:
  ToyLMConfig config_;
};

// Linear map from expert-stack width to LM width.
class Coupling {
 public:
  Coupling() = default;
  Coupling(num::ParameterStore& store, const std::string& name, std::size_t dim, std::size_t lm_dim)
      : linear(store, name, dim, lm_dim) {}

  num::Tensor operator()(const experts::StackOutput& out) const { return linear(out.sequence()); }

  num::Linear linear;
};

// Targets after cutting at the first EOS (EOS kept) and truncating to the
// LM's target length. Throws DataError when there is no EOS or no content.
struct AnswerTargets {
  std::vector<int> decoder_input;  // BOS followed by targets[0..T-2]
  std::vector<int> targets;
  bool truncated = false;
};
AnswerTargets prepare_answer(const std::vector<int>& answer, std::size_t max_target_len);

struct GenerationLoss {
  num::Tensor loss;    // mean token cross-entropy
  num::Tensor logits;  // [T, vocab]
  std::vector<int> targets;
  bool truncated = false;

  // Teacher-forced positions whose argmax equals the target.
  std::size_t correct() const;
};

GenerationLoss gen_loss(const experts::StackOutput& stack_out, const std::vector<int>& answer,
                        const ToyLM& lm, const Coupling& coupling);

// Lowest id among the maxima of one logits row.
int argmax_lowest(const num::Tensor& logits, std::size_t row);

// Greedy decoding without gradients; stops at EOS (not returned) or max_len.
std::vector<int> greedy_decode(const experts::StackOutput& stack_out, const ToyLM& lm,
                               const Coupling& coupling, std::size_t max_len);

inline constexpr const char* kLmPrefix = "lm.";
inline constexpr const char* kCouplingPrefix = "coupling.";

// Applies the freeze policy of a training stage and returns the parameters the
// optimizer should update. Stage 1 leaves out the LM and coupling entirely,
// stage 2 freezes the LM, stage 3 trains everything.
std::vector<num::Parameter*> set_stage(num::ParameterStore& store, int stage);

}  // namespace xdial::generator
