// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/pipeline/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "xdial/common/errors.hpp"
#include "xdial/pipeline/checkpoint.hpp"

namespace xdial::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

experts::EncoderConfig RunConfig::encoder_config(std::size_t vocab_size) const {
  experts::EncoderConfig c;
  c.frames = frames;
  c.image_size = image_size;
  c.patch_size = patch_size;
  c.patch_embed_width = patch_embed_width;
  c.vocab_size = vocab_size;
  c.max_text_len = max_text_len;
  c.stack.layers = layers;
  c.stack.expert_layers = expert_layers;
  c.stack.dim = dim;
  c.stack.heads = heads;
  c.stack.ffn_multiplier = ffn_multiplier;
  c.stack.modality_experts = modality_experts;
  c.stack.separate_spatial_temporal = separate_spatial_temporal;
  return c;
}

objectives::HeadConfig RunConfig::head_config(std::size_t vocab_size) const {
  return {dim, projection_dim, vocab_size};
}

generator::ToyLMConfig RunConfig::lm_config(std::size_t vocab_size) const {
  generator::ToyLMConfig c;
  c.vocab_size = vocab_size;
  c.dim = lm_dim;
  c.heads = lm_heads;
  c.encoder_layers = lm_encoder_layers;
  c.decoder_layers = lm_decoder_layers;
  c.ffn_multiplier = ffn_multiplier;
  c.max_source_len = max_source_len;
  c.max_target_len = max_target_len;
  return c;
}

std::size_t RunConfig::epochs_for(int stage) const {
  switch (stage) {
    case 1: return stage1_epochs;
    case 2: return stage2_epochs;
    case 3: return stage3_epochs;
  }
  throw ConfigError("invalid stage " + std::to_string(stage));
}

bool RunConfig::early_stopping_for(int stage) const { return stage == 1 ? early_stop_stage1 : early_stop_later; }

const std::string& RunConfig::train_set(int stage) const {
  switch (stage) {
    case 1: return stage1_train;
    case 2: return stage2_train;
    case 3: return stage3_train;
  }
  throw ConfigError("invalid stage " + std::to_string(stage));
}

std::string RunConfig::val_set(int stage) const {
  const std::string& v = stage == 1 ? stage1_val : stage == 2 ? stage2_val : stage3_val;
  return v.empty() ? train_set(stage) : v;
}

namespace {

using Field = std::variant<std::size_t*, double*, bool*, std::string*>;

struct Binding {
  const char* key;
  Field field;
  bool path = false;
};

template <typename Cfg>
std::vector<Binding> bindings(Cfg& c) {
  return {
      {"model.layers", &c.layers},
      {"model.expert_layers", &c.expert_layers},
      {"model.dim", &c.dim},
      {"model.heads", &c.heads},
      {"model.ffn_multiplier", &c.ffn_multiplier},
      {"model.frames", &c.frames},
      {"model.image_size", &c.image_size},
      {"model.patch_size", &c.patch_size},
      {"model.patch_embed_width", &c.patch_embed_width},
      {"model.projection_dim", &c.projection_dim},
      {"model.max_text_len", &c.max_text_len},
      {"model.lm_dim", &c.lm_dim},
      {"model.lm_heads", &c.lm_heads},
      {"model.lm_encoder_layers", &c.lm_encoder_layers},
      {"model.lm_decoder_layers", &c.lm_decoder_layers},
      {"model.max_source_len", &c.max_source_len},
      {"model.max_target_len", &c.max_target_len},
      {"model.vocab", &c.vocab, true},
      {"optim.base_lr", &c.base_lr},
      {"optim.min_lr", &c.min_lr},
      {"optim.weight_decay", &c.weight_decay},
      {"optim.clip", &c.clip},
      {"optim.batch_size", &c.batch_size},
      {"optim.warmup_fraction", &c.warmup_fraction},
      {"train.stage1_max_epochs", &c.stage1_epochs},
      {"train.stage2_max_epochs", &c.stage2_epochs},
      {"train.stage3_max_epochs", &c.stage3_epochs},
      {"train.patience", &c.patience},
      {"train.early_stop_stage1", &c.early_stop_stage1},
      {"train.early_stop_stages23", &c.early_stop_later},
      {"train.checkpoint_every", &c.checkpoint_every},
      {"train.seed", &c.seed},
      {"train.init_checkpoint", &c.init_checkpoint, true},
      {"data.stage1.train", &c.stage1_train, true},
      {"data.stage1.val", &c.stage1_val, true},
      {"data.stage2.train", &c.stage2_train, true},
      {"data.stage2.val", &c.stage2_val, true},
      {"data.stage3.train", &c.stage3_train, true},
      {"data.stage3.val", &c.stage3_val, true},
      {"data.domain_a", &c.domain_a, true},
      {"data.domain_b", &c.domain_b, true},
      {"data.domain_a_test", &c.domain_a_test, true},
      {"data.domain_b_test", &c.domain_b_test, true},
      {"data.context_budget", &c.context_budget},
      {"loss.stc", &c.losses.stc},
      {"loss.stm", &c.losses.stm},
      {"loss.vtc", &c.losses.vtc},
      {"loss.vtm", &c.losses.vtm},
      {"loss.mlm", &c.losses.mlm},
      {"experts.separate_spatial_temporal", &c.separate_spatial_temporal},
      {"experts.enabled", &c.modality_experts},
      {"ablation.skip_stage1", &c.skip_stage1},
      {"ablation.skip_stage2", &c.skip_stage2},
      {"run.output_dir", &c.output_dir, true},
      {"eval.max_len", &c.eval_max_len},
  };
}

void assign(const Binding& b, const json& v, const std::string& base_dir) {
  auto bad = [&](const char* what) { throw ConfigError(std::string("config key '") + b.key + "' must be " + what); };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) bad("a boolean");
          *p = v.get<bool>();
        } else if constexpr (std::is_same_v<T, double>) {
          if (!v.is_number()) bad("a number");
          *p = v.get<double>();
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!v.is_string()) bad("a string");
          std::string s = v.get<std::string>();
          if (b.path && !s.empty() && !base_dir.empty() && fs::path(s).is_relative()) {
            s = (fs::path(base_dir) / s).lexically_normal().string();
          }
          *p = s;
        } else {
          if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            bad("a non-negative integer");
          }
          *p = v.get<T>();
        }
      },
      b.field);
}

}  // namespace

RunConfig config_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  RunConfig cfg;
  const auto table = bindings(cfg);
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return key == b.key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    assign(*it, value, base_dir);
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON (" + e.what() + ")");
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  nlohmann::ordered_json j;
  for (const auto& b : bindings(copy)) {
    std::visit([&](auto* p) { j[b.key] = *p; }, b.field);
  }
  return j;
}

void validate(const RunConfig& c) {
  if (c.min_lr > c.base_lr) throw ConfigError("optim.min_lr must not exceed optim.base_lr");
  if (c.min_lr < 0.0 || !std::isfinite(c.base_lr)) throw ConfigError("learning rates must be finite and >= 0");
  if (c.stage1_epochs < 1 || c.stage2_epochs < 1 || c.stage3_epochs < 1) {
    throw ConfigError("every train.stageN_max_epochs must be >= 1");
  }
  if (c.batch_size < 2) throw ConfigError("optim.batch_size must be >= 2 (contrastive objectives need negatives)");
  if (c.warmup_fraction < 0.0 || c.warmup_fraction >= 1.0) throw ConfigError("optim.warmup_fraction must be in [0, 1)");
  if (c.expert_layers < 1 || c.expert_layers > c.layers) throw ConfigError("need 1 <= model.expert_layers <= model.layers");
  if (c.dim % c.heads != 0 || c.lm_dim % c.lm_heads != 0) throw ConfigError("widths must be divisible by head counts");
  if (c.frames < 1) throw ConfigError("model.frames must be >= 1");
  if (c.image_size % (2 * c.patch_size) != 0) {
    throw ConfigError("model.image_size must be a multiple of 2 * model.patch_size");
  }
  if (c.max_target_len < 2) throw ConfigError("model.max_target_len must be >= 2");
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(config_to_json(cfg).dump()); }

void apply_ablations(RunConfig& cfg, const std::string& list) {
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "no-stage1") {
      cfg.skip_stage1 = true;
    } else if (item == "no-stage2") {
      cfg.skip_stage2 = true;
    } else if (item == "no-stc-stm") {
      cfg.losses.stc = cfg.losses.stm = false;
    } else if (item == "no-separate-spa-tmp") {
      cfg.separate_spatial_temporal = false;
      cfg.losses.stc = cfg.losses.stm = false;
    } else if (item == "no-experts") {
      cfg.modality_experts = false;
    } else if (item == "no-stc") {
      cfg.losses.stc = false;
    } else if (item == "no-stm") {
      cfg.losses.stm = false;
    } else if (item == "no-vtc") {
      cfg.losses.vtc = false;
    } else if (item == "no-vtm") {
      cfg.losses.vtm = false;
    } else if (item == "no-mlm") {
      cfg.losses.mlm = false;
    } else {
      throw ConfigError("unknown ablation '" + item +
                        "' (expected no-stage1, no-stage2, no-stc-stm, no-separate-spa-tmp, no-experts, "
                        "no-stc, no-stm, no-vtc, no-vtm or no-mlm)");
    }
  }
}

std::size_t warmup_steps_for(std::size_t total_steps, const RunConfig& cfg) {
  if (total_steps < 2) return 0;
  const auto w = static_cast<std::size_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
  return std::min(w, total_steps - 1);
}

double lr_at(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, const RunConfig& cfg) {
  if (step > total_steps) throw ConfigError("lr_at: step beyond the end of the run");
  if (warmup_steps > 0 && step <= warmup_steps) {
    return cfg.base_lr * (static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
  if (total_steps == warmup_steps) return cfg.base_lr;
  const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return cfg.min_lr + (cfg.base_lr - cfg.min_lr) * (1.0 - t);
}

}  // namespace xdial::pipeline
