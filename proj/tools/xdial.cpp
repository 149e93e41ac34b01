// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train, eval, domain-shift, gen-data, report.

#include <cstdlib>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "xdial/common/errors.hpp"
#include "xdial/data/synth.hpp"
#include "xdial/pipeline/harness.hpp"

namespace {

using namespace xdial;

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kProvider = 4 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("xdial");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("V2D_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only honour it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("V2D_LOG={} is not a log level (trace, debug, info, warn, error, critical, off)", env);
    }
  }
}

struct TrainArgs {
  int stage = 0;
  std::string config;
  std::string resume;
  bool from_scratch = false;
  std::string ablate;
  std::size_t max_steps = 0;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string mode = "both";
  std::string embedder = "builtin";
  std::string swap;
  std::string out;
};

struct ShiftArgs {
  std::string plan;
  std::string config;
  bool from_scratch = false;
  std::string ablate;
};

struct GenArgs {
  std::string kind;
  std::size_t n = 32;
  std::uint64_t seed = 0;
  std::string out;
};

struct ReportArgs {
  std::string pred;
  std::string ref;
  bool json = false;
};

int cmd_train(const TrainArgs& a) {
  pipeline::RunConfig cfg = pipeline::load_config(a.config);
  if (!a.ablate.empty()) pipeline::apply_ablations(cfg, a.ablate);
  pipeline::StageOptions opt;
  opt.resume = a.resume;
  opt.from_scratch = a.from_scratch;
  opt.max_steps = a.max_steps;
  const auto r = pipeline::run_stage(a.stage, cfg, opt);
  std::cout << "stage " << a.stage << ": " << r.state.step << " steps, " << r.state.epochs_done << " epochs";
  if (r.state.has_best) std::cout << ", best val loss " << r.state.best_val;
  if (r.stopped_early) std::cout << " (early stop)";
  if (r.interrupted) std::cout << " (paused, resume from " << r.final_checkpoint << ")";
  std::cout << "\ncheckpoint: " << r.final_checkpoint << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  pipeline::EvalOptions opt;
  opt.mode = pipeline::parse_eval_mode(a.mode);
  opt.embedder = a.embedder;
  opt.swap = a.swap;
  opt.out_dir = a.out;
  const auto r = pipeline::run_eval(a.ckpt, a.data, opt);
  if (r.nlg) std::cout << eval::nlg_table(*r.nlg);
  if (r.retrieval) std::cout << eval::retrieval_table(*r.retrieval);
  return kOk;
}

int cmd_shift(const ShiftArgs& a) {
  pipeline::RunConfig cfg = pipeline::load_config(a.config);
  if (!a.ablate.empty()) pipeline::apply_ablations(cfg, a.ablate);
  const auto r = pipeline::run_domain_shift(cfg, pipeline::parse_shift_plan(a.plan), a.from_scratch);
  std::cout << r.report["eval"].dump(2) << "\nreport: " << r.run_dir << "/report.json\n";
  return kOk;
}

int cmd_gen(const GenArgs& a) {
  const auto path = data::synth_corpus(a.seed, a.n, data::parse_corpus_kind(a.kind), a.out);
  std::cout << path << "\n";
  return kOk;
}

int cmd_report(const ReportArgs& a) {
  const auto pairs = eval::load_prediction_pairs(a.pred, a.ref);
  const auto scores = eval::score_corpus(pairs.predictions, pairs.references);
  std::cout << (a.json ? eval::nlg_json(scores) + "\n" : eval::nlg_table(scores));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"xdial: multimodal expert dialog model, training and evaluation"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train one stage");
  t->add_option("--stage", train.stage, "stage to train")->required()->check(CLI::IsMember({1, 2, 3}));
  t->add_option("--config", train.config, "JSON config of dotted keys")->required();
  t->add_option("--resume", train.resume, "checkpoint directory to continue from");
  t->add_flag("--from-scratch", train.from_scratch, "allow a missing prior-stage checkpoint");
  t->add_option("--ablate", train.ablate, "comma-separated ablations, e.g. no-stc-stm,no-stage1");
  t->add_option("--max-steps", train.max_steps, "pause after this many updates");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "generate answers and score them");
  e->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  e->add_option("--data", ev.data, "dialog JSONL")->required();
  e->add_option("--mode", ev.mode, "nlg, retrieval or both")->check(CLI::IsMember({"nlg", "retrieval", "both"}));
  e->add_option("--embedder", ev.embedder, "builtin or the URL of an embedding service");
  e->add_option("--swap", ev.swap, "expert swaps at inference, e.g. spa:tmp,cap:ctx");
  e->add_option("--out", ev.out, "output directory (default <ckpt>/eval)");

  ShiftArgs sh;
  auto* d = app.add_subcommand("domain-shift", "stage-3 fine-tuning across two datasets");
  d->add_option("--plan", sh.plan, "a-to-b, b-to-a or joint")->required()->check(
      CLI::IsMember({"a-to-b", "b-to-a", "joint"}));
  d->add_option("--config", sh.config, "JSON config of dotted keys")->required();
  d->add_flag("--from-scratch", sh.from_scratch, "allow a missing prior-stage checkpoint");
  d->add_option("--ablate", sh.ablate, "comma-separated ablations");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "write a synthetic corpus");
  g->add_option("--kind", gen.kind, "stage1, stage2, stage3-video or stage3-image")->required();
  g->add_option("--n", gen.n, "number of samples")->required();
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--out", gen.out, "output directory")->required();

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "score a predictions file against references");
  r->add_option("--pred", rep.pred, "JSONL of {id, generated}")->required();
  r->add_option("--ref", rep.ref, "JSONL of {id, references}")->required();
  r->add_flag("--json", rep.json, "print JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kConfig;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(ev);
    if (*d) return cmd_shift(sh);
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_report(rep);
  } catch (const ConfigError& ex) {  // RoutingError included
    spdlog::error("config error: {}", ex.what());
    return kConfig;
  } catch (const DataError& ex) {
    spdlog::error("data error: {}", ex.what());
    return kData;
  } catch (const ProviderError& ex) {
    spdlog::error("provider error: {}", ex.what());
    return kProvider;
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    return kOther;
  }
  return kOther;
}
