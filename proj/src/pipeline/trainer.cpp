// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/pipeline/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "xdial/common/errors.hpp"

namespace xdial::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kHeadsPrefix = "heads.";

num::Rng step_rng(std::size_t seed, int stage, std::size_t step, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(step >> 32), stream};
  return num::Rng(seq);
}

data::BatchOptions batch_options(const RunConfig& cfg, int stage, bool shuffle) {
  data::BatchOptions o;
  o.batch_size = cfg.batch_size;
  o.seed = cfg.seed * 4 + static_cast<std::uint64_t>(stage);
  o.shuffle = shuffle;
  o.contrastive = stage == 1;
  return o;
}

}  // namespace

SampleCache build_cache(const data::Dataset& dataset, const Model& model, int stage) {
  if (stage == 1 && dataset.size() < 2) throw DataError("stage 1 needs at least two samples");
  if (stage > 1 && dataset.schema != data::Schema::dialog) {
    throw DataError("stage " + std::to_string(stage) + " needs dialog samples with answers");
  }
  if (stage == 2) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!dataset.is_video(i)) {
        throw DataError("stage 2 trains on videos only, sample '" + dataset.dialogs[i].id + "' is an image");
      }
    }
  }
  const data::BatchShape shape{stage, model.config.frames, model.config.image_size, model.config.context_budget};
  SampleCache c;
  c.dataset = &dataset;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const data::Batch b = data::make_batch(dataset, {i}, shape, model.vocab);
    c.inputs.push_back(b.encoder_input(0));
    c.answers.push_back(stage > 1 ? answer_ids(b.answers[0]) : std::vector<int>{});
  }
  return c;
}

StageTrainer::StageTrainer(Model& model, int stage, std::vector<const data::Dataset*> train,
                           const data::Dataset* val)
    : model_(model), stage_(stage) {
  if (train.empty()) throw ConfigError("no training set for stage " + std::to_string(stage));
  const RunConfig& cfg = model.config;
  for (const auto* d : train) train_.push_back(build_cache(*d, model, stage));
  if (val) val_ = std::make_unique<SampleCache>(build_cache(*val, model, stage));

  // Heads only see gradients in stage 1; keep weight decay off them later.
  for (auto* p : generator::set_stage(model.store, stage)) {
    if (stage > 1 && p->name.rfind(kHeadsPrefix, 0) == 0) continue;
    trainable_.push_back(p);
  }
  num::AdamWConfig oc;
  oc.weight_decay = cfg.weight_decay;
  oc.clip_norm = cfg.clip;
  optimizer_ = num::AdamW(oc);
  state_.stage = stage;

  steps_per_epoch_ = epoch_plan(0).size();
  if (steps_per_epoch_ == 0) throw DataError("stage " + std::to_string(stage) + " has no usable batches");
  total_steps_ = cfg.epochs_for(stage) * steps_per_epoch_;
  warmup_ = warmup_steps_for(total_steps_, cfg);
}

void StageTrainer::set_total_steps(std::size_t total) {
  if (total == 0) throw ConfigError("a stage needs at least one step");
  total_steps_ = total;
  warmup_ = warmup_steps_for(total_steps_, model_.config);
}

std::vector<StepRef> StageTrainer::epoch_plan(std::size_t epoch) const {
  const RunConfig& cfg = model_.config;
  std::vector<std::vector<std::vector<std::size_t>>> per_set;
  for (const auto& c : train_) {
    auto plan = data::plan_batches(*c.dataset, batch_options(cfg, stage_, true), epoch);
    if (plan.rejected > 0 && epoch == 0) {
      spdlog::debug("stage {}: {} samples in short contrastive batches skipped this epoch", stage_, plan.rejected);
    }
    per_set.push_back(std::move(plan.batches));
  }
  std::vector<StepRef> out;
  for (std::size_t k = 0;; ++k) {
    bool any = false;
    for (std::size_t s = 0; s < per_set.size(); ++s) {
      if (k < per_set[s].size()) {
        out.push_back({s, per_set[s][k]});
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

num::Tensor StageTrainer::batch_loss(const SampleCache& cache, const std::vector<std::size_t>& indices,
                                     num::Rng& rng, std::map<std::string, double>* terms) const {
  const RunConfig& cfg = model_.config;
  if (stage_ == 1) {
    std::vector<experts::EncoderInput> inputs;
    for (std::size_t i : indices) inputs.push_back(cache.inputs[i]);
    objectives::LossToggles toggles = cfg.losses;
    if (!cfg.separate_spatial_temporal) toggles.stc = toggles.stm = false;
    auto r = objectives::stage1_loss(model_.encoder, model_.heads, inputs, cache.dataset->is_video(indices[0]),
                                     toggles, rng);
    if (terms) *terms = r.terms;
    return r.total;
  }
  num::Tensor total;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    auto g = generator::gen_loss(model_.encoder.forward(cache.inputs[i]), cache.answers[i], model_.lm,
                                 model_.coupling);
    total = k == 0 ? g.loss : num::add(total, g.loss);
  }
  total = num::scale(total, 1.0 / static_cast<double>(indices.size()));
  if (terms) *terms = {{"gen", total.item()}};
  return total;
}

StepStats StageTrainer::step() {
  const std::size_t step = state_.step;
  if (step >= total_steps_) throw ConfigError("stage " + std::to_string(stage_) + " already ran all its steps");
  const std::size_t epoch = step / steps_per_epoch_;
  if (epoch != cached_epoch_) {
    cached_plan_ = epoch_plan(epoch);
    cached_epoch_ = epoch;
  }
  const StepRef& ref = cached_plan_.at(step % steps_per_epoch_);
  num::Rng rng = step_rng(model_.config.seed, stage_, step, 0);

  StepStats st;
  model_.store.zero_grad();
  const num::Tensor loss = batch_loss(train_[ref.source], ref.indices, rng, &st.terms);
  num::backward(loss);
  st.loss = loss.item();
  st.lr = lr_at(step + 1, warmup_, total_steps_, model_.config);
  st.grad_norm = optimizer_.step(trainable_, st.lr);
  model_.store.zero_grad();
  ++state_.step;
  return st;
}

double StageTrainer::validate() const {
  const SampleCache& cache = val_ ? *val_ : train_.front();
  num::NoGradGuard no_grad;
  const auto plan = data::plan_batches(*cache.dataset, batch_options(model_.config, stage_, false), 0);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    num::Rng rng = step_rng(model_.config.seed, stage_, b, 1);
    sum += batch_loss(cache, plan.batches[b], rng).item() * static_cast<double>(plan.batches[b].size());
    n += plan.batches[b].size();
  }
  if (n == 0) throw DataError("validation set has no usable batches");
  return sum / static_cast<double>(n);
}

std::string stage_init_checkpoint(int stage, const RunConfig& cfg, bool from_scratch) {
  if (stage < 1 || stage > 3) throw ConfigError("invalid stage " + std::to_string(stage));
  if (!cfg.init_checkpoint.empty()) return cfg.init_checkpoint;
  if (stage == 1) return "";
  int prior = stage - 1;
  if (stage == 3 && cfg.skip_stage2) prior = 1;
  if (prior == 1 && cfg.skip_stage1) return "";
  const std::string dir = (fs::path(cfg.output_dir) / ("stage" + std::to_string(prior)) / "final").string();
  if (fs::exists(fs::path(dir) / "manifest.json")) return dir;
  if (from_scratch) {
    spdlog::warn("stage {}: no stage-{} checkpoint at {}, starting from scratch", stage, prior, dir);
    return "";
  }
  throw ConfigError("stage " + std::to_string(stage) + " needs the stage-" + std::to_string(prior) +
                    " checkpoint " + dir + "; run stage " + std::to_string(prior) +
                    " first, or pass --from-scratch or the matching --ablate option");
}

std::unique_ptr<Model> load_model(const std::string& dir) {
  const json manifest = read_manifest(dir);
  std::ifstream in(checkpoint_config_path(dir));
  if (!in) throw DataError(dir + ": config.json missing");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(dir + "/config.json: " + e.what());
  }
  RunConfig cfg = config_from_json(j);
  auto model = std::make_unique<Model>(cfg, data::Vocabulary::load(checkpoint_vocab_path(dir)));
  if (config_hash(model->config) != manifest.at("config_hash").get<std::string>()) {
    throw DataError(dir + ": config.json does not match the manifest's config hash");
  }
  load_checkpoint(dir, *model);
  return model;
}

namespace {

void write_history(const fs::path& run_dir, const json& history) {
  std::ofstream out(run_dir / "history.jsonl", std::ios::binary);
  for (const auto& row : history) out << row.dump() << '\n';
  if (!out) throw DataError("cannot write " + (run_dir / "history.jsonl").string());
}

}  // namespace

StageResult run_stage(int stage, const RunConfig& cfg_in, const StageOptions& opt) {
  RunConfig cfg = cfg_in;
  validate(cfg);
  if (stage < 1 || stage > 3) throw ConfigError("invalid stage " + std::to_string(stage) + " (expected 1, 2 or 3)");
  if ((stage == 1 && cfg.skip_stage1) || (stage == 2 && cfg.skip_stage2)) {
    throw ConfigError("stage " + std::to_string(stage) + " is ablated in this configuration");
  }
  std::vector<std::string> train_paths = opt.train_sets;
  if (train_paths.empty()) {
    if (cfg.train_set(stage).empty()) {
      throw ConfigError("no training data for stage " + std::to_string(stage) + " (data.stage" +
                        std::to_string(stage) + ".train)");
    }
    train_paths.push_back(cfg.train_set(stage));
  }
  const std::string val_path = !opt.val_set.empty() ? opt.val_set : (opt.train_sets.empty() ? cfg.val_set(stage) : "");

  const fs::path run_dir = opt.run_dir.empty() ? fs::path(cfg.output_dir) / ("stage" + std::to_string(stage))
                                               : fs::path(opt.run_dir);
  fs::create_directories(run_dir);

  std::vector<data::Dataset> sets;
  for (const auto& p : train_paths) sets.push_back(data::load_any(p));
  std::optional<data::Dataset> val;
  if (!val_path.empty() && val_path != train_paths.front()) val = data::load_any(val_path);

  auto model = std::make_unique<Model>(cfg, load_vocabulary(cfg));
  std::vector<const data::Dataset*> ptrs;
  for (const auto& d : sets) ptrs.push_back(&d);
  StageTrainer trainer(*model, stage, ptrs, val ? &*val : nullptr);

  if (!opt.resume.empty()) {
    const json manifest = read_manifest(opt.resume);
    if (manifest.at("stage").get<int>() != stage) {
      throw ConfigError("cannot resume stage " + std::to_string(stage) + " from a stage-" +
                        std::to_string(manifest.at("stage").get<int>()) + " checkpoint");
    }
    if (manifest.at("config_hash").get<std::string>() != config_hash(cfg)) {
      throw ConfigError("config changed since " + opt.resume + " was written; resume needs the same config");
    }
    trainer.state() = load_checkpoint(opt.resume, *model, &trainer.optimizer());
    spdlog::info("stage {}: resumed at step {} from {}", stage, trainer.state().step, opt.resume);
  } else {
    const std::string init = !opt.init.empty() ? opt.init : stage_init_checkpoint(stage, cfg, opt.from_scratch);
    if (!init.empty()) {
      load_checkpoint(init, *model);
      spdlog::info("stage {}: starting from {}", stage, init);
    }
  }

  TrainState& st = trainer.state();
  st.stage = stage;
  const std::size_t spe = trainer.steps_per_epoch();
  const std::size_t total = trainer.total_steps();
  const bool early = cfg.early_stopping_for(stage);
  spdlog::info("stage {}: {} trainable tensors, {} steps per epoch, {} total, warm-up {}", stage,
               trainer.trainable().size(), spe, total, trainer.warmup_steps());

  StageResult result;
  result.run_dir = run_dir.string();
  std::size_t done_here = 0;
  double epoch_loss = 0.0;
  std::size_t epoch_steps = 0;
  auto t0 = std::chrono::steady_clock::now();
  const num::AdamW* opt_state = &trainer.optimizer();

  while (!st.finished && st.step < total) {
    if (opt.max_steps > 0 && done_here >= opt.max_steps) {
      result.interrupted = true;
      break;
    }
    const StepStats s = trainer.step();
    ++done_here;
    epoch_loss += s.loss;
    ++epoch_steps;
    spdlog::debug("stage {} step {}/{} loss {:.5f} lr {:.3e} |g| {:.3f}", stage, st.step, total, s.loss, s.lr,
                  s.grad_norm);
    if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 && st.step % spe != 0) {
      save_checkpoint((run_dir / ("step-" + std::to_string(st.step))).string(), *model, opt_state, st);
    }
    if (st.step % spe != 0) continue;

    // end of epoch
    const double val_loss = trainer.validate();
    st.epochs_done = st.step / spe;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool improved = !st.has_best || val_loss < st.best_val;
    if (improved) {
      st.has_best = true;
      st.best_val = val_loss;
      st.bad_epochs = 0;
    } else {
      ++st.bad_epochs;
    }
    nlohmann::ordered_json row;
    row["stage"] = stage;
    row["epoch"] = st.epochs_done;
    row["step"] = st.step;
    row["train_loss"] = epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
    row["val_loss"] = val_loss;
    row["lr"] = lr_at(st.step, trainer.warmup_steps(), total, cfg);
    row["best"] = improved;
    row["seconds"] = secs;
    st.history.push_back(row);
    spdlog::info("stage {} epoch {}: train {:.4f} val {:.4f}{}", stage, st.epochs_done,
                 row["train_loss"].get<double>(), val_loss, improved ? " (best)" : "");
    epoch_loss = 0.0;
    epoch_steps = 0;
    t0 = std::chrono::steady_clock::now();

    if (early && st.bad_epochs >= cfg.patience) {
      st.finished = true;
      result.stopped_early = true;
      spdlog::info("stage {}: early stop after {} epochs without improvement", stage, st.bad_epochs);
    }
    if (st.step >= total) st.finished = true;
    if (improved) save_checkpoint((run_dir / "best").string(), *model, opt_state, st);
    save_checkpoint((run_dir / "last").string(), *model, opt_state, st);
    write_history(run_dir, st.history);
  }

  if (result.interrupted) {
    save_checkpoint((run_dir / "last").string(), *model, opt_state, st);
    write_history(run_dir, st.history);
    result.state = st;
    result.final_checkpoint = (run_dir / "last").string();
    return result;
  }

  if (early && st.has_best) {
    TrainState best = load_checkpoint((run_dir / "best").string(), *model);
    best.finished = true;
    best.history = st.history;
    save_checkpoint((run_dir / "final").string(), *model, nullptr, best);
  } else {
    save_checkpoint((run_dir / "final").string(), *model, nullptr, st);
  }
  result.state = st;
  result.final_checkpoint = (run_dir / "final").string();
  return result;
}

}  // namespace xdial::pipeline
