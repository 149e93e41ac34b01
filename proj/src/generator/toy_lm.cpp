// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/generator/toy_lm.hpp"

#include <algorithm>
#include <numeric>

#include "xdial/common/errors.hpp"
#include "xdial/common/tokens.hpp"

namespace xdial::generator {

using num::Tensor;

namespace {

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

ToyLM::ToyLM(num::ParameterStore& store, const std::string& name, ToyLMConfig config)
    : config_(config) {
  const std::size_t d = config.dim;
  const std::size_t hidden = config.ffn_multiplier * d;
  embedding = store.normal(name + ".embed", {config.vocab_size, d}, num::kInitStd);
  source_position = store.normal(name + ".source_pos", {config.max_source_len, d}, num::kInitStd);
  target_position = store.normal(name + ".target_pos", {config.max_target_len, d}, num::kInitStd);
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    const std::string p = name + ".enc" + std::to_string(l);
    encoder.push_back({num::LayerNorm(store, p + ".attn_norm", d),
                       num::MultiHeadAttention(store, p + ".attn", d, config.heads),
                       num::LayerNorm(store, p + ".ffn_norm", d),
                       num::FeedForward(store, p + ".ffn", d, hidden)});
  }
  for (std::size_t l = 0; l < config.decoder_layers; ++l) {
    const std::string p = name + ".dec" + std::to_string(l);
    decoder.push_back({num::LayerNorm(store, p + ".self_norm", d),
                       num::MultiHeadAttention(store, p + ".self", d, config.heads),
                       num::LayerNorm(store, p + ".cross_norm", d),
                       num::MultiHeadAttention(store, p + ".cross", d, config.heads),
                       num::LayerNorm(store, p + ".ffn_norm", d),
                       num::FeedForward(store, p + ".ffn", d, hidden)});
  }
  encoder_norm = num::LayerNorm(store, name + ".enc_norm", d);
  decoder_norm = num::LayerNorm(store, name + ".dec_norm", d);
  output = num::Linear(store, name + ".output", d, config.vocab_size);
}

Tensor ToyLM::encode(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.dim(1) != config_.dim || inputs.dim(0) == 0) {
    throw ShapeError("LM encoder input must be [n>0, " + std::to_string(config_.dim) + "], got " +
                     num::to_string(inputs.shape()));
  }
  const std::size_t n = inputs.dim(0);
  if (n > config_.max_source_len) {
    throw ShapeError("LM encoder input has " + std::to_string(n) + " tokens, limit is " +
                     std::to_string(config_.max_source_len));
  }
  Tensor x = num::add(inputs, num::gather_rows(source_position, iota_ids(n)));
  for (const auto& layer : encoder) {
    x = num::add(x, layer.attention(layer.attention_norm(x)));
    x = num::add(x, layer.ffn(layer.ffn_norm(x)));
  }
  return encoder_norm(x);
}

Tensor ToyLM::encode_tokens(const std::vector<int>& ids) const {
  if (ids.empty()) throw DataError("cannot encode an empty token sequence");
  const std::size_t n = std::min(ids.size(), config_.max_source_len);
  std::vector<int> kept(ids.begin(), ids.begin() + n);
  return encode(num::gather_rows(embedding, kept));
}

Tensor ToyLM::decode(const Tensor& memory, const std::vector<int>& decoder_input) const {
  const std::size_t t = decoder_input.size();
  if (t == 0 || t > config_.max_target_len) {
    throw ShapeError("decoder input length " + std::to_string(t) + " outside [1, " +
                     std::to_string(config_.max_target_len) + "]");
  }
  const num::Mask causal = num::Mask::causal(t);
  Tensor x = num::add(num::gather_rows(embedding, decoder_input),
                      num::gather_rows(target_position, iota_ids(t)));
  for (const auto& layer : decoder) {
    x = num::add(x, layer.self_attention(layer.self_norm(x), &causal));
    x = num::add(x, layer.cross_attention(layer.cross_norm(x), memory, nullptr));
    x = num::add(x, layer.ffn(layer.ffn_norm(x)));
  }
  return output(decoder_norm(x));
}

AnswerTargets prepare_answer(const std::vector<int>& answer, std::size_t max_target_len) {
  AnswerTargets out;
  auto eos = std::find(answer.begin(), answer.end(), kEos);
  if (eos == answer.end()) throw DataError("answer tokens must end with EOS");
  out.targets.assign(answer.begin(), eos);
  if (out.targets.empty()) throw DataError("answer is empty");
  if (out.targets.size() + 1 > max_target_len) {
    out.targets.resize(max_target_len - 1);
    out.truncated = true;
  }
  out.targets.push_back(kEos);
  out.decoder_input.push_back(kBos);
  out.decoder_input.insert(out.decoder_input.end(), out.targets.begin(), out.targets.end() - 1);
  return out;
}

std::size_t GenerationLoss::correct() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) n += argmax_lowest(logits, i) == targets[i];
  return n;
}

GenerationLoss gen_loss(const experts::StackOutput& stack_out, const std::vector<int>& answer,
                        const ToyLM& lm, const Coupling& coupling) {
  const AnswerTargets prepared = prepare_answer(answer, lm.config().max_target_len);
  const Tensor memory = lm.encode(coupling(stack_out));
  GenerationLoss out;
  out.logits = lm.decode(memory, prepared.decoder_input);
  out.targets = prepared.targets;
  out.truncated = prepared.truncated;
  out.loss = num::cross_entropy(out.logits, num::one_hot(out.targets, lm.config().vocab_size));
  return out;
}

int argmax_lowest(const Tensor& logits, std::size_t row) {
  const std::size_t v = logits.dim(1);
  const double* r = logits.data().data() + row * v;
  std::size_t best = 0;
  for (std::size_t j = 1; j < v; ++j) {
    if (r[j] > r[best]) best = j;
  }
  return static_cast<int>(best);
}

std::vector<int> greedy_decode(const experts::StackOutput& stack_out, const ToyLM& lm,
                               const Coupling& coupling, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  num::NoGradGuard no_grad;
  const Tensor memory = lm.encode(coupling(stack_out));
  const std::size_t limit = std::min(max_len, lm.config().max_target_len);
  std::vector<int> input{kBos};
  std::vector<int> out;
  while (out.size() < limit) {
    const Tensor logits = lm.decode(memory, input);
    const int next = argmax_lowest(logits, logits.dim(0) - 1);
    if (next == kEos) break;
    out.push_back(next);
    input.push_back(next);
  }
  return out;
}

std::vector<num::Parameter*> set_stage(num::ParameterStore& store, int stage) {
  if (stage < 1 || stage > 3) {
    throw ConfigError("invalid stage " + std::to_string(stage) + " (expected 1, 2 or 3)");
  }
  store.set_frozen("", false);
  if (stage == 2) store.set_frozen(kLmPrefix, true);
  std::vector<num::Parameter*> out;
  for (auto& p : store.params()) {
    const bool lm = p.name.rfind(kLmPrefix, 0) == 0;
    const bool coupling = p.name.rfind(kCouplingPrefix, 0) == 0;
    if (stage == 1 && (lm || coupling)) continue;
    if (p.frozen) continue;
    out.push_back(&p);
  }
  return out;
}

}  // namespace xdial::generator
