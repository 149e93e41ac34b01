// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "xdial/data/batching.hpp"
#include "xdial/pipeline/checkpoint.hpp"
#include "xdial/pipeline/model.hpp"

namespace xdial::pipeline {

// Tokenized samples of one dataset, loaded once and reused across epochs.
struct SampleCache {
  const data::Dataset* dataset = nullptr;
  std::vector<experts::EncoderInput> inputs;
  std::vector<std::vector<int>> answers;  // with EOS, empty for caption data
};

SampleCache build_cache(const data::Dataset& dataset, const Model& model, int stage);

struct StepRef {
  std::size_t source = 0;  // which training set
  std::vector<std::size_t> indices;
};

struct StepStats {
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::map<std::string, double> terms;
};

// Drives optimizer updates for one stage over one or more training sets.
// With several sets, each epoch alternates their batches one for one.
class StageTrainer {
 public:
  StageTrainer(Model& model, int stage, std::vector<const data::Dataset*> train,
               const data::Dataset* val = nullptr);

  int stage() const { return stage_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return total_steps_; }
  std::size_t warmup_steps() const { return warmup_; }
  // Overrides epochs x steps_per_epoch, e.g. for a fixed number of updates.
  void set_total_steps(std::size_t total);
  const std::vector<num::Parameter*>& trainable() const { return trainable_; }

  // Batch order of an epoch; a pure function of (seed, stage, epoch).
  std::vector<StepRef> epoch_plan(std::size_t epoch) const;

  // Applies the update with index state().step and advances it.
  StepStats step();
  // Mean loss over the validation set (the first training set if none).
  double validate() const;
  // Loss of one batch; recorded unless under a NoGradGuard.
  num::Tensor batch_loss(const SampleCache& cache, const std::vector<std::size_t>& indices, num::Rng& rng,
                         std::map<std::string, double>* terms = nullptr) const;

  TrainState& state() { return state_; }
  num::AdamW& optimizer() { return optimizer_; }

 private:
  Model& model_;
  int stage_;
  std::vector<SampleCache> train_;
  std::unique_ptr<SampleCache> val_;
  std::vector<num::Parameter*> trainable_;
  num::AdamW optimizer_;
  TrainState state_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t total_steps_ = 0;
  std::size_t warmup_ = 0;
  std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  std::vector<StepRef> cached_plan_;
};

struct StageOptions {
  std::string resume;                   // checkpoint to continue from
  bool from_scratch = false;            // allow stage 2/3 without a prior-stage checkpoint
  std::string init;                     // starting parameters, overrides the stage lookup
  std::vector<std::string> train_sets;  // overrides the config's set for this stage
  std::string val_set;
  std::string run_dir;                  // default <output_dir>/stage<N>
  std::size_t max_steps = 0;            // stop this invocation after that many updates, 0 = no limit
};

struct StageResult {
  std::string run_dir;
  std::string final_checkpoint;
  TrainState state;
  bool stopped_early = false;
  bool interrupted = false;  // max_steps reached before the end
};

// Trains one stage and writes <run_dir>/{last,best,final,step-N}/ plus
// history.jsonl. "final" is the best checkpoint when early stopping is on
// and the last one otherwise.
StageResult run_stage(int stage, const RunConfig& cfg, const StageOptions& options = {});

// Where stage `stage` takes its starting parameters from under cfg, or an
// empty string for a fresh model. ConfigError when a required prior stage
// has not been run.
std::string stage_init_checkpoint(int stage, const RunConfig& cfg, bool from_scratch);

// Rebuilds a model from a checkpoint directory (config and vocab included).
std::unique_ptr<Model> load_model(const std::string& dir);

}  // namespace xdial::pipeline
