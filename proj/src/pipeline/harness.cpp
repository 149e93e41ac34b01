// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/pipeline/harness.hpp"

#include <filesystem>
#include <fstream>

#include <spdlog/spdlog.h>

#include "xdial/common/errors.hpp"
#include "xdial/evaluation/embedding.hpp"

namespace xdial::pipeline {

namespace fs = std::filesystem;

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "nlg") return EvalMode::nlg;
  if (text == "retrieval") return EvalMode::retrieval;
  if (text == "both") return EvalMode::both;
  throw ConfigError("unknown eval mode '" + text + "' (expected nlg, retrieval or both)");
}

std::string eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::nlg: return "nlg";
    case EvalMode::retrieval: return "retrieval";
    case EvalMode::both: return "both";
  }
  return "both";
}

EvalMode default_mode(const data::Dataset& data) {
  for (const auto& s : data.dialogs) {
    if (s.candidates.empty() || !s.gt_index) return EvalMode::nlg;
  }
  return EvalMode::both;
}

EvalReport evaluate(const Model& model, const data::Dataset& data, const EvalOptions& opt) {
  if (data.schema != data::Schema::dialog) throw DataError("evaluation needs dialog samples with answers");
  if (data.size() == 0) throw DataError("evaluation set is empty");
  const bool want_nlg = opt.mode != EvalMode::retrieval;
  const bool want_ret = opt.mode != EvalMode::nlg;
  if (want_ret) {
    for (const auto& s : data.dialogs) {
      if (s.candidates.empty() || !s.gt_index) {
        throw DataError("retrieval mode needs candidates and gt_index, sample '" + s.id + "' has none");
      }
    }
  }
  const auto pairs = experts::parse_swaps(opt.swap);
  const experts::RoutingMap routing = experts::swap_experts(model.encoder.stack.config(), pairs).routing;
  const std::size_t max_len = model.config.eval_max_len ? model.config.eval_max_len : model.config.max_target_len;
  const data::BatchShape shape{3, model.config.frames, model.config.image_size, model.config.context_budget};

  EvalReport r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const data::Batch b = data::make_batch(data, {i}, shape, model.vocab);
    const auto ids = model.answer(b.encoder_input(0), routing, max_len);
    r.ids.push_back(data.dialogs[i].id);
    r.predictions.push_back(data::detokenize(ids, model.vocab));
    r.references.push_back(data.dialogs[i].answer);
  }

  nlohmann::ordered_json j;
  j["samples"] = data.size();
  j["mode"] = eval_mode_name(opt.mode);
  j["swap"] = opt.swap;
  if (want_nlg) {
    std::vector<std::vector<std::string>> refs;
    for (const auto& a : r.references) refs.push_back({a});
    r.nlg = eval::score_corpus(r.predictions, refs);
    j["nlg"] = nlohmann::ordered_json::parse(eval::nlg_json(*r.nlg));
  }
  if (want_ret) {
    std::unique_ptr<eval::EmbeddingProvider> provider;
    if (opt.embedder.empty() || opt.embedder == "builtin") {
      provider = std::make_unique<eval::BuiltinEmbedder>(model.lm, model.vocab);
    } else {
      eval::RemoteOptions ro;
      ro.url = opt.embedder;
      provider = std::make_unique<eval::RemoteEmbedder>(ro);
    }
    std::vector<eval::RankedCandidates> ranked;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data.dialogs[i];
      ranked.push_back(eval::rank_candidates(r.predictions[i], s.candidates, static_cast<std::size_t>(*s.gt_index),
                                             *provider, s.relevance));
    }
    r.retrieval = eval::retrieval_metrics(ranked);
    j["embedder"] = provider->name();
    j["retrieval"] = nlohmann::ordered_json::parse(eval::retrieval_json(*r.retrieval));
  }
  r.json = std::move(j);
  return r;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + p.string());
}

void write_eval_files(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  std::string preds, refs;
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    preds += nlohmann::ordered_json{{"id", r.ids[i]}, {"generated", r.predictions[i]}}.dump() + "\n";
    refs += nlohmann::ordered_json{{"id", r.ids[i]}, {"references", {r.references[i]}}}.dump() + "\n";
  }
  write_text(dir / "predictions.jsonl", preds);
  write_text(dir / "references.jsonl", refs);
  write_text(dir / "report.json", r.json.dump(2) + "\n");
}

}  // namespace

EvalReport run_eval(const std::string& checkpoint, const std::string& data_path, const EvalOptions& opt) {
  const auto model = load_model(checkpoint);
  const data::Dataset data = data::load_any(data_path);
  EvalReport r = evaluate(*model, data, opt);
  r.json["checkpoint"] = fs::path(checkpoint).lexically_normal().string();
  r.json["data"] = data_path;
  const fs::path out = opt.out_dir.empty() ? fs::path(checkpoint) / "eval" : fs::path(opt.out_dir);
  write_eval_files(out, r);
  spdlog::info("eval: wrote {}", (out / "report.json").string());
  return r;
}

ShiftPlan parse_shift_plan(const std::string& text) {
  if (text == "a-to-b") return ShiftPlan::a_to_b;
  if (text == "b-to-a") return ShiftPlan::b_to_a;
  if (text == "joint") return ShiftPlan::joint;
  throw ConfigError("unknown plan '" + text + "' (expected a-to-b, b-to-a or joint)");
}

std::string shift_plan_name(ShiftPlan plan) {
  switch (plan) {
    case ShiftPlan::a_to_b: return "a-to-b";
    case ShiftPlan::b_to_a: return "b-to-a";
    case ShiftPlan::joint: return "joint";
  }
  return "joint";
}

DomainShiftResult run_domain_shift(const RunConfig& cfg, ShiftPlan plan, bool from_scratch) {
  if (cfg.domain_a.empty() || cfg.domain_b.empty()) {
    throw ConfigError("domain shift needs two datasets (data.domain_a and data.domain_b)");
  }
  const std::string name = shift_plan_name(plan);
  const fs::path root = fs::path(cfg.output_dir) / "domain" / name;
  const std::string init = stage_init_checkpoint(3, cfg, from_scratch);

  DomainShiftResult result;
  result.run_dir = root.string();
  nlohmann::ordered_json report;
  report["plan"] = name;
  nlohmann::ordered_json phases = nlohmann::ordered_json::array();

  auto phase = [&](const std::string& tag, std::vector<std::string> sets, const std::string& start) {
    StageOptions o;
    o.init = start;
    o.from_scratch = true;
    o.train_sets = std::move(sets);
    o.run_dir = (root / tag).string();
    spdlog::info("domain shift {}: phase {}", name, tag);
    const StageResult r = run_stage(3, cfg, o);
    phases.push_back({{"phase", tag}, {"train", o.train_sets}, {"epochs", r.state.epochs_done},
                      {"steps", r.state.step}, {"checkpoint", r.final_checkpoint}});
    return r.final_checkpoint;
  };

  switch (plan) {
    case ShiftPlan::a_to_b:
      result.final_checkpoint = phase("b", {cfg.domain_b}, phase("a", {cfg.domain_a}, init));
      break;
    case ShiftPlan::b_to_a:
      result.final_checkpoint = phase("a", {cfg.domain_a}, phase("b", {cfg.domain_b}, init));
      break;
    case ShiftPlan::joint:
      result.final_checkpoint = phase("joint", {cfg.domain_a, cfg.domain_b}, init);
      break;
  }
  report["phases"] = phases;

  const auto model = load_model(result.final_checkpoint);
  nlohmann::ordered_json evals;
  const std::pair<std::string, std::string> tests[] = {
      {"a", cfg.domain_a_test.empty() ? cfg.domain_a : cfg.domain_a_test},
      {"b", cfg.domain_b_test.empty() ? cfg.domain_b : cfg.domain_b_test}};
  for (const auto& [tag, path] : tests) {
    const data::Dataset data = data::load_any(path);
    EvalOptions eo;
    eo.mode = default_mode(data);
    EvalReport r = evaluate(*model, data, eo);
    r.json["data"] = path;
    write_eval_files(root / ("eval-" + tag), r);
    evals[tag] = r.json;
  }
  report["eval"] = evals;
  write_text(root / "report.json", report.dump(2) + "\n");
  result.report = std::move(report);
  return result;
}

}  // namespace xdial::pipeline
