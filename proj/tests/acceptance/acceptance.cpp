// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "xdial/common/errors.hpp"
#include "xdial/common/tokens.hpp"
#include "xdial/data/synth.hpp"
#include "xdial/data/text.hpp"
#include "xdial/evaluation/nlg.hpp"
#include "xdial/evaluation/retrieval.hpp"
#include "xdial/numerics/gradcheck.hpp"
#include "xdial/pipeline/harness.hpp"
#include "xdial/vision/frontend.hpp"

namespace fs = std::filesystem;
using namespace xdial;
using namespace xdial::num;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failures of one criterion; the first few are kept for the report.
struct Verdict {
  std::size_t checks = 0;
  std::vector<std::string> failures;
  std::string note;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok) failures.push_back(what);
  }
  bool ok() const { return checks > 0 && failures.empty(); }
};

int g_failed = 0;

void report(int id, const std::string& name, const Verdict& v) {
  std::string detail = v.note;
  if (!v.failures.empty()) {
    detail += (detail.empty() ? "" : "; ") + std::to_string(v.failures.size()) + " failed, first: ";
    detail += v.failures.front();
  }
  std::printf("%s  %2d %-24s %zu checks%s%s\n", v.ok() ? "PASS" : "FAIL", id, name.c_str(), v.checks,
              detail.empty() ? "" : "  ", detail.c_str());
  std::fflush(stdout);
  if (!v.ok()) ++g_failed;
}

template <typename F>
void run_criterion(int id, const std::string& name, F&& body) {
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& ex) {
    v.expect(false, std::string("exception: ") + ex.what());
  }
  report(id, name, v);
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

void perturb(ParameterStore& store, double sd, Rng& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& p : store.params()) {
    for (double& x : p.tensor.mutable_data()) x += dist(rng);
  }
}

std::vector<Tensor> param_tensors(ParameterStore& store) {
  std::vector<Tensor> out;
  for (auto& p : store.params()) out.push_back(p.tensor);
  return out;
}

Tensor basis(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return Tensor({1, dim}, v);
}

// ---------------------------------------------------------------- gradients

// One gradient case: builds a fresh random instance for `trial` and returns
// the loss function together with the tensors to perturb.
struct GradInstance {
  std::function<Tensor()> f;
  std::vector<Tensor> inputs;
  std::shared_ptr<void> keep;  // owns modules the closure refers to
};
using GradFactory = std::function<GradInstance(int trial)>;

template <typename T>
std::shared_ptr<T> hold(GradInstance& g, std::shared_ptr<T> p) {
  g.keep = p;
  return p;
}

struct LayerBox {
  ParameterStore store;
  explicit LayerBox(std::uint64_t seed) : store(seed) {}
};

std::vector<std::pair<std::string, GradFactory>> gradient_cases() {
  std::vector<std::pair<std::string, GradFactory>> cases;

  // Losses, checked on their direct inputs and heads.
  auto contrastive = [](bool spatial_temporal) {
    return [spatial_temporal](int trial) {
      GradInstance g;
      struct Box {
        ParameterStore store;
        objectives::ObjectiveHeads heads;
        std::vector<Tensor> a, b;
        bool st = true;
        Box(int t) : store(40 + t), heads(store, "heads", {5, 3, 12}) {}
      };
      auto box = hold(g, std::make_shared<Box>(trial));
      box->st = spatial_temporal;
      Rng rng(400 + trial);
      perturb(box->store, 0.5, rng);
      for (int i = 0; i < 3; ++i) {
        box->a.push_back(Tensor::randn({2, 5}, rng, 1.0, true));
        box->b.push_back(Tensor::randn({spatial_temporal ? 2u : 3u, 5}, rng, 1.0, true));
      }
      g.inputs = box->a;
      g.inputs.insert(g.inputs.end(), box->b.begin(), box->b.end());
      for (auto* p : box->store.with_prefix(spatial_temporal ? "heads.proj_spa" : "heads.proj_vis"))
        g.inputs.push_back(p->tensor);
      for (auto* p : box->store.with_prefix(spatial_temporal ? "heads.proj_tmp" : "heads.proj_txt"))
        g.inputs.push_back(p->tensor);
      for (auto* p : box->store.with_prefix(spatial_temporal ? "heads.stc_log_tau" : "heads.vtc_log_tau"))
        g.inputs.push_back(p->tensor);
      if (g.inputs.size() < 9) throw std::logic_error("projection heads not found in the store");
      Box* b = box.get();
      g.f = [b] {
        const auto& h = b->heads;
        std::vector<Tensor> pa, pb;
        for (std::size_t i = 0; i < b->a.size(); ++i) {
          pa.push_back(b->st ? h.spatial(b->a[i]) : h.visual(b->a[i]));
          pb.push_back(b->st ? h.temporal(b->b[i]) : h.text(b->b[i]));
        }
        return objectives::contrastive_loss(pa, pb, b->st ? h.stc_tau : h.vtc_tau);
      };
      return g;
    };
  };
  cases.emplace_back("STC", contrastive(true));
  cases.emplace_back("VTC", contrastive(false));

  auto matching = [](bool spatial_temporal) {
    return [spatial_temporal](int trial) {
      GradInstance g;
      struct Box {
        ParameterStore store;
        objectives::ObjectiveHeads heads;
        std::vector<Tensor> pos, neg;
        Box(int t) : store(60 + t), heads(store, "heads", {4, 3, 12}) {}
      };
      auto box = hold(g, std::make_shared<Box>(trial));
      Rng rng(600 + trial);
      perturb(box->store, 0.5, rng);
      for (int i = 0; i < 3; ++i) {
        box->pos.push_back(Tensor::randn({1, 4}, rng, 1.0, true));
        box->neg.push_back(Tensor::randn({1, 4}, rng, 1.0, true));
      }
      const num::Linear& head = spatial_temporal ? box->heads.stm_head : box->heads.vtm_head;
      g.inputs = box->pos;
      g.inputs.insert(g.inputs.end(), box->neg.begin(), box->neg.end());
      g.inputs.push_back(head.weight);
      g.inputs.push_back(head.bias);
      Box* b = box.get();
      g.f = [b, &head] { return objectives::matching_loss(b->pos, b->neg, head); };
      return g;
    };
  };
  cases.emplace_back("STM", matching(true));
  cases.emplace_back("VTM", matching(false));

  cases.emplace_back("MLM", [](int trial) {
    GradInstance g;
    struct Box {
      ParameterStore store;
      objectives::ObjectiveHeads heads;
      Tensor states;
      objectives::MaskedText masked;
      Box(int t) : store(80 + t), heads(store, "heads", {4, 3, 10}) {}
    };
    auto box = hold(g, std::make_shared<Box>(trial));
    Rng rng(800 + trial);
    perturb(box->store, 0.5, rng);
    box->states = Tensor::randn({5, 4}, rng, 1.0, true);
    box->masked.positions = {0, 3};
    box->masked.targets = {static_cast<int>(rng() % 10), static_cast<int>(rng() % 10)};
    g.inputs = {box->states, box->heads.mlm_head.weight, box->heads.mlm_head.bias};
    Box* b = box.get();
    g.f = [b] { return objectives::mlm_loss(b->states, b->masked, b->heads.mlm_head); };
    return g;
  });

  cases.emplace_back("GEN", [](int trial) {
    GradInstance g;
    struct Box {
      ParameterStore store;
      generator::ToyLM lm;
      generator::Coupling coupling;
      experts::StackOutput stack;
      std::vector<int> answer;
      Box(int t, const generator::ToyLMConfig& cfg) : store(100 + t), lm(store, "lm", cfg), coupling(store, "coupling", 3, 4) {}
    };
    generator::ToyLMConfig cfg;
    cfg.vocab_size = 12;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.ffn_multiplier = 2;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.max_source_len = 16;
    cfg.max_target_len = 8;
    auto box = hold(g, std::make_shared<Box>(trial, cfg));
    Rng rng(1000 + trial);
    perturb(box->store, 0.3, rng);
    box->stack.cls = Tensor::randn({1, 3}, rng, 1.0, true);
    box->stack.final[experts::Stream::spa] = Tensor::randn({3, 3}, rng, 1.0, true);
    box->stack.final[experts::Stream::cap] = Tensor::randn({2, 3}, rng, 1.0, true);
    for (int i = 0; i < 3; ++i) box->answer.push_back(static_cast<int>(6 + rng() % 6));
    box->answer.push_back(kEos);
    g.inputs = {box->stack.cls, box->stack.final[experts::Stream::spa], box->stack.final[experts::Stream::cap]};
    for (auto& t : param_tensors(box->store)) g.inputs.push_back(t);
    Box* b = box.get();
    g.f = [b] { return generator::gen_loss(b->stack, b->answer, b->lm, b->coupling).loss; };
    return g;
  });

  // Layers, each contracted with a fixed random weight to a scalar.
  auto layer_case = [](auto build) {
    return [build](int trial) {
      GradInstance g;
      auto box = hold(g, std::make_shared<LayerBox>(200 + trial));
      Rng rng(2000 + trial);
      build(g, *box, rng);
      return g;
    };
  };
  cases.emplace_back("linear", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    auto lin = std::make_shared<Linear>(box.store, "lin", 4, 3);
    perturb(box.store, 0.5, rng);
    Tensor x = Tensor::randn({5, 4}, rng, 1.0, true), w = Tensor::randn({5, 3}, rng, 1.0);
    g.inputs = param_tensors(box.store);
    g.inputs.push_back(x);
    auto keep = g.keep;
    g.f = [lin, x, w, keep] { return sum(mul((*lin)(x), w)); };
  }));
  cases.emplace_back("layer_norm", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    auto ln = std::make_shared<LayerNorm>(box.store, "ln", 6);
    perturb(box.store, 0.5, rng);
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, true), w = Tensor::randn({4, 6}, rng, 1.0);
    g.inputs = param_tensors(box.store);
    g.inputs.push_back(x);
    auto keep = g.keep;
    g.f = [ln, x, w, keep] { return sum(mul((*ln)(x), w)); };
  }));
  cases.emplace_back("attention", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    auto attn = std::make_shared<MultiHeadAttention>(box.store, "attn", 6, 2);
    perturb(box.store, 0.5, rng);
    Tensor x = Tensor::randn({5, 6}, rng, 1.0, true), kv = Tensor::randn({3, 6}, rng, 1.0, true);
    Tensor w = Tensor::randn({5, 6}, rng, 1.0);
    auto causal = std::make_shared<Mask>(Mask::causal(5));
    g.inputs = param_tensors(box.store);
    g.inputs.push_back(x);
    g.inputs.push_back(kv);
    auto keep = g.keep;
    g.f = [attn, x, kv, w, causal, keep] {
      return add(sum(mul((*attn)(x, causal.get()), w)), sum(mul((*attn)(x, kv, nullptr), w)));
    };
  }));
  cases.emplace_back("feed_forward", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    auto ffn = std::make_shared<FeedForward>(box.store, "ffn", 4, 8);
    perturb(box.store, 0.5, rng);
    Tensor x = Tensor::randn({3, 4}, rng, 1.0, true), w = Tensor::randn({3, 4}, rng, 1.0);
    g.inputs = param_tensors(box.store);
    g.inputs.push_back(x);
    auto keep = g.keep;
    g.f = [ffn, x, w, keep] { return sum(mul((*ffn)(x), w)); };
  }));
  cases.emplace_back("patch_embed+pre_attn", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    vision::PatchEmbedderConfig cfg;
    cfg.patch_size = 2;
    cfg.embed_width = 3;
    cfg.dim = 4;
    auto embedder = std::make_shared<vision::PatchEmbedder>(box.store, "patch", cfg);
    auto pre = std::make_shared<vision::PreAttention>(box.store, "pre", 4, 2);
    perturb(box.store, 0.3, rng);
    Tensor x = Tensor::uniform({2, 3, 4, 4}, rng, 0.0, 1.0);
    x.set_requires_grad(true);
    g.inputs = {x};
    for (auto& t : param_tensors(box.store)) g.inputs.push_back(t);
    auto keep = g.keep;
    g.f = [embedder, pre, x, keep] {
      const auto tokens = vision::embed_frames(x, *embedder);
      const auto out = (*pre)(tokens);
      return add(sum(mul(out.spatial, out.temporal)), sum(pre->sequential(tokens)));
    };
  }));
  cases.emplace_back("expert_stack", layer_case([](GradInstance& g, LayerBox& box, Rng& rng) {
    experts::ExpertStackConfig cfg;
    cfg.layers = 2;
    cfg.expert_layers = 1;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.ffn_multiplier = 2;
    auto stack = std::make_shared<experts::ExpertStack>(box.store, "stack", cfg);
    perturb(box.store, 0.2, rng);
    auto bundle = std::make_shared<experts::ModalityBundle>();
    for (auto s : experts::kStreams) (*bundle)[s] = Tensor::randn({2, 4}, rng, 1.0, true);
    for (auto s : experts::kStreams) g.inputs.push_back((*bundle)[s]);
    for (auto& t : param_tensors(box.store)) g.inputs.push_back(t);
    Tensor w = Tensor::randn({9, 4}, rng, 1.0);
    auto keep = g.keep;
    g.f = [stack, bundle, w, keep] { return sum(mul(stack->forward(*bundle).sequence(), w)); };
  }));
  return cases;
}

void criterion_gradients(Verdict& v) {
  const auto t0 = Clock::now();
  double worst64 = 0.0, worst32 = 0.0;
  for (const auto& [name, factory] : gradient_cases()) {
    for (int trial = 0; trial < 5; ++trial) {
      for (auto [precision, tol] : {std::pair{Precision::f64, 1e-6}, std::pair{Precision::f32, 1e-4}}) {
        GradInstance g;
        {
          PrecisionScope f64(Precision::f64);
          g = factory(trial);
        }
        for (auto& t : g.inputs) round_to_float(t);
        const auto r = gradcheck(g.f, g.inputs, {precision, 1e-6, tol});
        const bool is64 = precision == Precision::f64;
        (is64 ? worst64 : worst32) = std::max(is64 ? worst64 : worst32, r.max_rel_error);
        v.expect(r.ok, name + " trial " + std::to_string(trial) + (is64 ? " f64" : " f32") + " rel " +
                           fmt_double(r.max_rel_error));
      }
    }
  }
  const double secs = seconds_since(t0);
  v.expect(secs < 60.0, "runtime " + fmt_double(secs) + " s");
  v.note = "worst rel err f64 " + fmt_double(worst64) + ", f32 " + fmt_double(worst32) + ", " +
           fmt_double(secs) + " s";
}

// -------------------------------------------------------------------- masks

void criterion_masks(Verdict& v) {
  ParameterStore store(7);
  vision::PreAttention pre(store, "pre", 8, 2);
  Rng rng(8);
  for (std::size_t f = 1; f <= 8; ++f) {
    for (std::size_t p = 1; p <= 8; ++p) {
      const std::string at = "F=" + std::to_string(f) + " P=" + std::to_string(p);
      const auto m = vision::build_masks(f, p);
      v.expect(m.spatial.is_symmetric() && m.temporal.is_symmetric(), at + " symmetric");
      v.expect((m.spatial & m.temporal) == Mask::identity(f * p), at + " AND is identity");

      vision::VisualTokens tok;
      tok.tokens = Tensor::randn({f, p, 8}, rng, 1.0);
      tok.num_frames = f;
      tok.patches_per_frame = p;
      tok.masks = vision::cached_masks(f, p);
      const auto base = pre(tok);
      const std::size_t f0 = rng() % f, p0 = rng() % p;
      vision::VisualTokens moved = tok;
      moved.tokens = tok.tokens.detach();
      auto data = moved.tokens.mutable_data();
      for (std::size_t k = 0; k < 8; ++k) data[(f0 * p + p0) * 8 + k] += 0.5 + 0.1 * static_cast<double>(k);
      const auto out = pre(moved);
      for (std::size_t r = 0; r < f * p; ++r) {
        const bool same_frame = r / p == f0, same_patch = r % p == p0;
        for (std::size_t c = 0; c < 8; ++c) {
          if (!same_frame && out.spatial.at(r, c) != base.spatial.at(r, c)) {
            v.expect(false, at + " spatial row " + std::to_string(r) + " sees another frame");
            r = f * p;
            break;
          }
          if (!same_patch && out.temporal.at(r, c) != base.temporal.at(r, c)) {
            v.expect(false, at + " temporal row " + std::to_string(r) + " sees another patch");
            r = f * p;
            break;
          }
        }
      }
      v.expect(true, at + " locality");
    }
  }
}

// ------------------------------------------------------------------ routing

void criterion_routing(Verdict& v) {
  using namespace experts;
  ParameterStore store(9);
  EncoderConfig cfg;
  cfg.frames = 2;
  cfg.image_size = 28;
  cfg.patch_size = 14;
  cfg.patch_embed_width = 4;
  cfg.vocab_size = 64;
  cfg.max_text_len = 8;
  cfg.stack.layers = 4;
  cfg.stack.expert_layers = 3;
  cfg.stack.dim = 8;
  cfg.stack.heads = 2;
  cfg.stack.ffn_multiplier = 2;
  MultimodalEncoder enc(store, "enc", cfg);
  Rng rng(10);
  NoGradGuard ng;
  const std::pair<int, bool> patterns[] = {{1, true}, {1, false}, {2, true}, {3, true}, {3, false}};
  for (auto [stage, video] : patterns) {
    const std::string at = "stage " + std::to_string(stage) + (video ? " video" : " image");
    EncoderInput in;
    in.frames = Tensor::uniform({video ? 2u : 1u, 3, 28, 28}, rng, 0.0, 1.0);
    in.caption = {6, 7, 8};
    in.context = {9, 10, 11, 12};
    in.availability = availability_for(stage, video);
    RoutingAudit audit;
    enc.forward(in, &audit);
    v.expect(audit.layers.size() == 4, at + " layer count");
    const auto bundle_av = enc.embed(in).availability();
    v.expect(bundle_av == in.availability, at + " embedded streams follow availability");
    for (std::size_t l = 0; l < audit.layers.size(); ++l) {
      const auto& layer = audit.layers[l];
      const std::string al = at + " layer " + std::to_string(l + 1);
      if (l < 3) {
        v.expect(!layer.fusion, al + " expert layer");
        v.expect(layer.invocations[index(ExpertId::fus)] == 0, al + " no fusion expert");
        const bool any_visual = in.availability[index(Stream::spa)] || in.availability[index(Stream::tmp)];
        v.expect(layer.invocations[index(ExpertId::vis)] == (any_visual ? 1 : 0), al + " vision expert once");
        int active = any_visual ? 1 : 0;
        for (Stream s : kStreams) {
          const bool on = in.availability[index(s)];
          active += on ? 1 : 0;
          v.expect(on ? layer.routed[index(s)] == own_expert(s) : !layer.routed[index(s)].has_value(),
                   al + " stream " + name(s) + " routed to its own expert only");
          v.expect(layer.invocations[index(own_expert(s))] == (on ? 1 : 0), al + " " + name(s) + " invocations");
        }
        v.expect(layer.total_invocations() == active, al + " exclusive");
        if (!video) v.expect(layer.invocations[index(ExpertId::tmp)] == 0, al + " E_tmp unused for images");
      } else {
        v.expect(layer.fusion, al + " fusion layer");
        v.expect(layer.total_invocations() == 1 && layer.invocations[index(ExpertId::fus)] == 1,
                 al + " fusion expert only");
        for (Stream s : kStreams) {
          if (in.availability[index(s)]) v.expect(layer.routed[index(s)] == ExpertId::fus, al + " fused");
        }
      }
    }
  }
  bool threw = false;
  try {
    availability_for(2, false);
  } catch (const ConfigError&) {
    threw = true;
  }
  v.expect(threw, "stage 2 image data rejected");
}

// -------------------------------------------------------------- contrastive

void criterion_contrastive(Verdict& v) {
  double worst_uniform = 0.0, worst_orth = 0.0;
  for (auto precision : {Precision::f64, Precision::f32}) {
    PrecisionScope scope(precision);
    ParameterStore store(11);
    objectives::ObjectiveHeads heads(store, "heads", {8, 4, 16});
    for (const objectives::Temperature* tau : {&heads.stc_tau, &heads.vtc_tau}) {
      for (std::size_t k : {2u, 4u, 8u}) {
        std::vector<Tensor> a(k, basis(8, 3)), b(k, basis(8, 3));
        const double err = std::abs(objectives::contrastive_loss(a, b, *tau).item() - std::log(double(k)));
        worst_uniform = std::max(worst_uniform, err);
        v.expect(err <= 1e-6, "uniform K=" + std::to_string(k) + " err " + fmt_double(err));
      }
    }
  }
  PrecisionScope f64(Precision::f64);
  ParameterStore store(12);
  objectives::Temperature stc(store, "stc", 0.01), vtc(store, "vtc", 0.01);
  for (const objectives::Temperature* tau : {&stc, &vtc}) {
    for (std::size_t k : {2u, 4u, 8u}) {
      std::vector<Tensor> a, b;
      for (std::size_t i = 0; i < k; ++i) {
        a.push_back(basis(8, i));
        b.push_back(basis(8, i));
      }
      const double loss = objectives::contrastive_loss(a, b, *tau).item();
      worst_orth = std::max(worst_orth, loss);
      v.expect(loss <= 1e-3, "orthogonal K=" + std::to_string(k) + " loss " + fmt_double(loss));
    }
  }
  v.note = "max |L - ln K| " + fmt_double(worst_uniform) + ", max orthogonal loss " + fmt_double(worst_orth);
}

// ------------------------------------------------------------------- corpora

struct Corpora {
  fs::path root;
  std::string s1, s2, s3;
};

const Corpora& corpora() {
  static const Corpora c = [] {
    Corpora k;
    k.root = fs::temp_directory_path() / "xdial_acceptance";
    fs::remove_all(k.root);
    fs::create_directories(k.root);
    k.s1 = data::synth_corpus(1, 32, data::CorpusKind::stage1, (k.root / "s1").string());
    k.s2 = data::synth_corpus(2, 32, data::CorpusKind::stage2, (k.root / "s2").string());
    k.s3 = data::synth_corpus(3, 32, data::CorpusKind::stage3_video, (k.root / "s3").string());
    return k;
  }();
  return c;
}

pipeline::RunConfig smoke_config() {
  const Corpora& k = corpora();
  pipeline::RunConfig c;
  c.stage1_train = k.s1;
  c.stage2_train = k.s2;
  c.stage3_train = k.s3;
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  c.stage3_epochs = 200;
  c.base_lr = 7e-4;
  c.min_lr = 5e-5;
  c.batch_size = 4;
  c.output_dir = (k.root / "smoke").string();
  return c;
}

std::vector<double> values_with_prefix(const pipeline::Model& m, const std::string& prefix) {
  std::vector<double> out;
  for (const auto& p : m.store.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    const auto d = p.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

// ------------------------------------------------------------------- freeze

void criterion_freeze(Verdict& v) {
  pipeline::RunConfig cfg = smoke_config();
  pipeline::Model m(cfg, data::synthetic_vocabulary());
  const data::Dataset s2 = data::load_any(corpora().s2);
  const data::Dataset s3 = data::load_any(corpora().s3);
  const auto lm0 = values_with_prefix(m, "lm.");
  const auto enc0 = values_with_prefix(m, "enc.");
  const auto coupling0 = values_with_prefix(m, "coupling.");
  {
    pipeline::StageTrainer tr(m, 2, {&s2});
    tr.set_total_steps(100);
    for (int i = 0; i < 100; ++i) tr.step();
    v.expect(tr.state().step == 100, "100 stage-2 steps");
  }
  v.expect(values_with_prefix(m, "lm.") == lm0, "stage 2 changed the language model");
  v.expect(values_with_prefix(m, "enc.") != enc0, "stage 2 left the encoder untouched");
  v.expect(values_with_prefix(m, "coupling.") != coupling0, "stage 2 left the coupling untouched");
  pipeline::StageTrainer tr3(m, 3, {&s3});
  tr3.step();
  const auto lm3 = values_with_prefix(m, "lm.");
  std::size_t changed = 0;
  for (std::size_t i = 0; i < lm0.size(); ++i) changed += lm3[i] != lm0[i];
  v.expect(changed > 0, "stage 3 did not update the language model");
  v.note = "stage 3 changed " + std::to_string(changed) + "/" + std::to_string(lm0.size()) + " LM values in one step";
}

// -------------------------------------------------------------- overfit smoke

struct SmokeResult {
  std::string checkpoint;
  bool trained = false;
};

SmokeResult g_smoke;

void criterion_smoke(Verdict& v) {
  const auto t0 = Clock::now();
  const pipeline::RunConfig cfg = smoke_config();
  std::string final;
  for (int stage = 1; stage <= 3; ++stage) {
    const auto r = pipeline::run_stage(stage, cfg);
    final = r.final_checkpoint;
  }
  const double train_secs = seconds_since(t0);
  const auto model = pipeline::load_model(final);
  const data::Dataset ds = data::load_any(cfg.stage3_train);
  const data::BatchShape shape{3, cfg.frames, cfg.image_size, cfg.context_budget};
  std::size_t correct = 0, total = 0, exact = 0;
  NoGradGuard ng;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto b = data::make_batch(ds, {i}, shape, model->vocab);
    const auto in = b.encoder_input(0);
    const auto g = generator::gen_loss(model->encoder.forward(in), pipeline::answer_ids(b.answers[0]), model->lm,
                                       model->coupling);
    correct += g.correct();
    total += g.targets.size();
    exact += model->answer(in, experts::identity_routing(), cfg.max_target_len) == b.answers[0];
  }
  const double acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  const double secs = seconds_since(t0);
  v.expect(acc >= 0.95, "teacher-forced accuracy " + fmt_double(acc));
  v.expect(exact >= 30, "exact greedy answers " + std::to_string(exact) + "/32");
  v.expect(ds.size() == 32, "corpus size");
  v.expect(secs < 600.0, "runtime " + fmt_double(secs) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "tf acc %.4f, exact %zu/%zu, train %.0f s, total %.0f s", acc, exact, ds.size(),
                train_secs, secs);
  v.note = buf;
  g_smoke.checkpoint = final;
  g_smoke.trained = true;
}

// ---------------------------------------------------------------- metrics

void criterion_metrics(Verdict& v) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> grade(0, 2);
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      for (std::size_t gt = 0; gt < n; ++gt) {
        std::vector<double> rel(n);
        for (auto& x : rel) x = 0.5 * grade(rng);
        rel[gt] = 1.0;
        std::vector<double> scores(n);
        for (std::size_t pos = 0; pos < n; ++pos) scores[perm[pos]] = static_cast<double>(n - pos);
        const auto ranked = eval::rank_by_scores(scores, gt, rel);
        const std::size_t rank =
            static_cast<std::size_t>(std::find(perm.begin(), perm.end(), gt) - perm.begin()) + 1;
        auto dcg = [&](const std::vector<std::size_t>& order) {
          double s = 0.0;
          for (std::size_t i = 0; i < order.size(); ++i) s += rel[order[i]] / std::log2(static_cast<double>(i) + 2.0);
          return s;
        };
        double ideal = 0.0;
        std::vector<std::size_t> q(n);
        std::iota(q.begin(), q.end(), 0);
        do {
          ideal = std::max(ideal, dcg(q));
        } while (std::next_permutation(q.begin(), q.end()));
        bool ok = ranked.order == perm;
        for (std::size_t k : {1u, 5u, 10u}) ok = ok && eval::recall_at(ranked, k) == (rank <= k ? 1.0 : 0.0);
        ok = ok && eval::reciprocal_rank(ranked) == 1.0 / static_cast<double>(rank);
        ok = ok && std::abs(eval::ndcg(ranked) - dcg(perm) / ideal) <= 1e-15;
        if (!ok) v.expect(false, "brute force n=" + std::to_string(n) + " gt=" + std::to_string(gt));
        ++cases;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  v.expect(cases == 719, "permutation cases " + std::to_string(cases));

  const double b1 = eval::bleu(data::metric_tokens("the cat"), {data::metric_tokens("the cat sat")}, 1);
  v.expect(std::abs(b1 - 0.6065) <= 1e-4, "BLEU-1 hand case " + fmt_double(b1));

  const auto pool = data::answer_pool();
  std::vector<std::string> preds;
  std::vector<std::vector<std::string>> refs;
  // Every sentence needs 4-grams for all four orders to reach 10.
  for (const auto& a : pool) {
    if (data::metric_tokens(a).size() < 4) continue;
    if (std::find(preds.begin(), preds.end(), a) != preds.end()) continue;
    preds.push_back(a);
    refs.push_back({a});
    if (preds.size() == 64) break;
  }
  const auto s = eval::score_corpus(preds, refs);
  for (int n = 0; n < 4; ++n) v.expect(s.bleu[n] == 1.0, "self-match B-" + std::to_string(n + 1));
  v.expect(s.rouge_l == 1.0, "self-match ROUGE-L " + fmt_double(s.rouge_l));
  v.expect(std::abs(s.cider - 10.0) <= 1e-6, "self-match CIDEr " + fmt_double(s.cider));
  v.note = std::to_string(cases) + " ranked lists, BLEU-1 " + fmt_double(b1) + ", self-match CIDEr " +
           fmt_double(s.cider) + " on " + std::to_string(preds.size()) + " answers";
}

// ------------------------------------------------------------------ ranking

// Multiplies another provider's raw vectors by a positive factor.
class ScaledProvider : public eval::EmbeddingProvider {
 public:
  ScaledProvider(eval::EmbeddingProvider& inner, double factor) : inner_(inner), factor_(factor) {}
  std::string name() const override { return inner_.name() + "*scaled"; }
  std::vector<eval::Embedding> embed(const std::vector<std::string>& texts) override {
    auto out = inner_.embed(texts);
    for (auto& e : out)
      for (double& x : e) x *= factor_;
    return out;
  }

 private:
  eval::EmbeddingProvider& inner_;
  double factor_;
};

void criterion_ranking(Verdict& v) {
  ParameterStore store(13);
  generator::ToyLMConfig cfg;
  cfg.dim = 32;
  cfg.heads = 4;
  cfg.ffn_multiplier = 2;
  cfg.max_source_len = 64;
  generator::ToyLM lm(store, "lm", cfg);
  const auto vocab = data::synthetic_vocabulary();
  eval::BuiltinEmbedder builtin(lm, vocab);
  const auto pool = data::answer_pool();
  std::mt19937_64 rng(14);
  std::size_t first = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::string gen = pool[rng() % pool.size()];
    std::vector<std::string> cands;
    while (cands.size() < 99) {
      const std::string& c = pool[rng() % pool.size()];
      if (c != gen) cands.push_back(c);
    }
    const std::size_t gt = rng() % 100;
    cands.insert(cands.begin() + static_cast<std::ptrdiff_t>(gt), gen);
    const auto r = eval::rank_candidates(gen, cands, gt, builtin);
    first += r.gt_rank() == 1;
    const double factor = std::exp(std::uniform_real_distribution<double>(-6.0, 6.0)(rng));
    ScaledProvider scaled(builtin, factor);
    const auto rs = eval::rank_candidates(gen, cands, gt, scaled);
    bool same = rs.order == r.order;
    for (std::size_t i = 0; i < r.scores.size(); ++i) same = same && std::abs(rs.scores[i] - r.scores[i]) <= 1e-12;
    v.expect(same, "scale " + fmt_double(factor) + " changed the ranking in case " + std::to_string(trial));
  }
  v.expect(first == 100, "duplicate at rank 1 in " + std::to_string(first) + "/100");
  v.note = "duplicate ranked first " + std::to_string(first) + "/100";
}

// ------------------------------------------------------------------- swaps

void criterion_swaps(Verdict& v) {
  if (!g_smoke.trained) {
    v.expect(false, "needs the overfit model, which was not produced");
    return;
  }
  const auto model = pipeline::load_model(g_smoke.checkpoint);
  const data::Dataset ds = data::load_any(corpora().s3);
  pipeline::EvalOptions opt;
  opt.mode = pipeline::EvalMode::nlg;
  const auto base = *pipeline::evaluate(*model, ds, opt).nlg;
  auto values = [](const eval::NlgScores& s) {
    return std::vector<std::pair<std::string, double>>{{"B-1", s.bleu[0]}, {"B-2", s.bleu[1]}, {"B-3", s.bleu[2]},
                                                       {"B-4", s.bleu[3]}, {"METEOR", s.meteor},
                                                       {"ROUGE-L", s.rouge_l}, {"CIDEr", s.cider}};
  };
  std::ostringstream note;
  note << "unswapped CIDEr " << fmt_double(base.cider);
  for (const std::string swap : {"spa:tmp", "cap:ctx", "spa:cap,tmp:ctx", "spa:ctx,tmp:cap"}) {
    opt.swap = swap;
    const auto s = *pipeline::evaluate(*model, ds, opt).nlg;
    const auto a = values(base), b = values(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
      v.expect(b[i].second <= a[i].second + 1e-12,
               swap + " " + a[i].first + " " + fmt_double(b[i].second) + " > " + fmt_double(a[i].second));
    }
    note << ", " << swap << " " << fmt_double(s.cider);
  }
  v.note = note.str();
}

// ---------------------------------------------------------------- schedule

void criterion_schedule(Verdict& v) {
  const pipeline::RunConfig c;
  v.expect(c.base_lr == 1e-4 && c.min_lr == 5e-5, "default base and floor");
  for (std::size_t total : {10u, 100u, 1000u, 12345u}) {
    const std::size_t w = pipeline::warmup_steps_for(total, c);
    const double peak = pipeline::lr_at(w, w, total, c), end = pipeline::lr_at(total, w, total, c);
    v.expect(std::abs(peak - 1e-4) <= 1e-12, "lr at warmup end " + fmt_double(peak));
    v.expect(std::abs(end - 5e-5) <= 1e-12, "lr at run end " + fmt_double(end));
  }

  // Checkpoint round trip with optimizer state.
  const fs::path dir = corpora().root / "roundtrip";
  pipeline::RunConfig cfg = smoke_config();
  cfg.output_dir = dir.string();
  pipeline::Model a(cfg, data::synthetic_vocabulary());
  const data::Dataset ds = data::load_any(corpora().s3);
  pipeline::StageTrainer tr(a, 3, {&ds});
  for (int i = 0; i < 3; ++i) tr.step();
  const std::string ck = (dir / "ck").string();
  pipeline::save_checkpoint(ck, a, &tr.optimizer(), tr.state());
  pipeline::Model b(cfg, data::synthetic_vocabulary());
  AdamW opt;
  const auto st = pipeline::load_checkpoint(ck, b, &opt);
  v.expect(st.step == 3 && st.stage == 3, "state restored");
  v.expect(values_with_prefix(a, "") == values_with_prefix(b, ""), "parameters bit-identical");
  v.expect(opt.steps() == tr.optimizer().steps(), "optimizer step count");
  bool moments = opt.moments().size() == tr.optimizer().moments().size();
  for (const auto& [name, m] : tr.optimizer().moments()) {
    const auto it = opt.moments().find(name);
    moments = moments && it != opt.moments().end() && it->second.m == m.m && it->second.v == m.v;
  }
  v.expect(moments, "optimizer moments bit-identical");
  NoGradGuard ng;
  const auto batch = data::make_batch(ds, {0}, {3, cfg.frames, cfg.image_size, 0}, a.vocab);
  const auto in = batch.encoder_input(0);
  const auto ans = pipeline::answer_ids(batch.answers[0]);
  const Tensor ta = generator::gen_loss(a.encoder.forward(in), ans, a.lm, a.coupling).logits;
  const Tensor tb = generator::gen_loss(b.encoder.forward(in), ans, b.lm, b.coupling).logits;
  const auto la = ta.data(), lb = tb.data();
  v.expect(std::equal(la.begin(), la.end(), lb.begin(), lb.end()), "logits bit-identical");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const auto t0 = Clock::now();
  run_criterion(1, "gradient-suite", criterion_gradients);
  run_criterion(2, "mask-structure", criterion_masks);
  run_criterion(3, "routing", criterion_routing);
  run_criterion(4, "contrastive-calibration", criterion_contrastive);
  run_criterion(5, "freeze-contract", criterion_freeze);
  run_criterion(6, "overfit-smoke", criterion_smoke);
  run_criterion(7, "metric-oracles", criterion_metrics);
  run_criterion(8, "ranking-scheme", criterion_ranking);
  run_criterion(9, "swap-direction", criterion_swaps);
  run_criterion(10, "schedule-fidelity", criterion_schedule);
  std::printf("%d of 10 criteria failed, %.0f s\n", g_failed, seconds_since(t0));
  return g_failed == 0 ? 0 : 1;
}
