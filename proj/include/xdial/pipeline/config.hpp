// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdial/experts/encoder.hpp"
#include "xdial/generator/toy_lm.hpp"
#include "xdial/objectives/losses.hpp"

namespace xdial::pipeline {

// Desk-scale defaults. Full-scale values are listed in the README.
struct RunConfig {
  // model
  std::size_t layers = 4;         // N
  std::size_t expert_layers = 3;  // L
  std::size_t dim = 64;           // D
  std::size_t heads = 4;
  std::size_t ffn_multiplier = 4;
  std::size_t frames = 4;  // F
  std::size_t image_size = 56;
  std::size_t patch_size = 14;
  std::size_t patch_embed_width = 32;
  std::size_t projection_dim = 32;
  std::size_t max_text_len = 64;
  std::size_t lm_dim = 64;
  std::size_t lm_heads = 4;
  std::size_t lm_encoder_layers = 2;
  std::size_t lm_decoder_layers = 2;
  std::size_t max_source_len = 256;
  std::size_t max_target_len = 32;
  std::string vocab;  // empty: built-in synthetic vocabulary

  // optimizer
  double base_lr = 1e-4;
  double min_lr = 5e-5;
  double weight_decay = 0.01;
  double clip = 1.0;
  std::size_t batch_size = 8;
  double warmup_fraction = 0.1;

  // schedule
  std::size_t stage1_epochs = 10;
  std::size_t stage2_epochs = 3;
  std::size_t stage3_epochs = 12;
  std::size_t patience = 2;
  bool early_stop_stage1 = true;
  bool early_stop_later = false;  // stages 2 and 3
  std::size_t checkpoint_every = 0;  // steps between periodic checkpoints, 0 = epoch ends only
  std::size_t seed = 0;

  // data, JSONL paths (relative paths resolve against the config file)
  std::string stage1_train, stage1_val;
  std::string stage2_train, stage2_val;
  std::string stage3_train, stage3_val;
  std::string domain_a, domain_b;            // stage-3 style sets for domain-shift runs
  std::string domain_a_test, domain_b_test;  // default to the training sets
  std::size_t context_budget = 0;

  // ablations
  objectives::LossToggles losses;
  bool separate_spatial_temporal = true;
  bool modality_experts = true;
  bool skip_stage1 = false;
  bool skip_stage2 = false;

  std::string output_dir = "runs/default";
  std::string init_checkpoint;  // explicit starting point, overrides the stage lookup
  std::size_t eval_max_len = 0;  // greedy decoding length, 0 = max_target_len

  experts::EncoderConfig encoder_config(std::size_t vocab_size) const;
  objectives::HeadConfig head_config(std::size_t vocab_size) const;
  generator::ToyLMConfig lm_config(std::size_t vocab_size) const;
  std::size_t epochs_for(int stage) const;
  bool early_stopping_for(int stage) const;
  const std::string& train_set(int stage) const;
  std::string val_set(int stage) const;  // falls back to the training set
};

// Reads a JSON object of flat dotted keys ("optim.base_lr": 1e-4). Unknown
// keys, wrong types and broken invariants raise ConfigError.
RunConfig load_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);
// SHA-256 of the canonical JSON form.
std::string config_hash(const RunConfig& cfg);

// Comma separated: no-stage1, no-stage2, no-stc-stm, no-separate-spa-tmp,
// no-experts, no-stc, no-stm, no-vtc, no-vtm, no-mlm.
void apply_ablations(RunConfig& cfg, const std::string& list);

// Linear warm-up from 0 to base_lr over warmup_steps, then linear decay to
// min_lr at total_steps.
double lr_at(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, const RunConfig& cfg);
std::size_t warmup_steps_for(std::size_t total_steps, const RunConfig& cfg);

}  // namespace xdial::pipeline
