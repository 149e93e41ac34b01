// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdial/evaluation/nlg.hpp"
#include "xdial/evaluation/retrieval.hpp"
#include "xdial/pipeline/trainer.hpp"

namespace xdial::pipeline {

enum class EvalMode { nlg, retrieval, both };
EvalMode parse_eval_mode(const std::string& text);
std::string eval_mode_name(EvalMode mode);

struct EvalOptions {
  EvalMode mode = EvalMode::both;
  std::string embedder = "builtin";  // or an http(s) URL of an embedding service
  std::string swap;                  // "spa:tmp,cap:ctx"
  std::string out_dir;               // run_eval only; default <ckpt>/eval
};

struct EvalReport {
  std::vector<std::string> ids;
  std::vector<std::string> predictions;
  std::vector<std::string> references;
  std::optional<eval::NlgScores> nlg;
  std::optional<eval::RetrievalScores> retrieval;
  nlohmann::ordered_json json;
};

// Greedy answers for every dialog sample, scored as requested. Swapped
// experts naming a stream the data lacks raise RoutingError.
EvalReport evaluate(const Model& model, const data::Dataset& data, const EvalOptions& options);

// Loads the checkpoint, evaluates and writes report.json, predictions.jsonl
// and references.jsonl. Same inputs give byte-identical files.
EvalReport run_eval(const std::string& checkpoint, const std::string& data_path, const EvalOptions& options);

// Picks both when every sample carries candidates, nlg otherwise.
EvalMode default_mode(const data::Dataset& data);

enum class ShiftPlan { a_to_b, b_to_a, joint };
ShiftPlan parse_shift_plan(const std::string& text);
std::string shift_plan_name(ShiftPlan plan);

struct DomainShiftResult {
  std::string run_dir;
  std::string final_checkpoint;
  nlohmann::ordered_json report;
};

// Stage-3 fine-tuning over the two domain sets: one after the other, or
// alternating batches. The result is evaluated on both test sets.
DomainShiftResult run_domain_shift(const RunConfig& cfg, ShiftPlan plan, bool from_scratch = false);

}  // namespace xdial::pipeline
