// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "xdial/common/errors.hpp"
#include "xdial/common/tokens.hpp"
#include "xdial/generator/toy_lm.hpp"
#include "xdial/numerics/gradcheck.hpp"
#include "xdial/numerics/optim.hpp"

using namespace xdial::num;
using namespace xdial::generator;
using xdial::kBos;
using xdial::kEos;
using xdial::kPad;
using xdial::experts::StackOutput;
using xdial::experts::Stream;

namespace {

ToyLMConfig small_lm(std::size_t vocab = 64, std::size_t d = 16) {
  ToyLMConfig cfg;
  cfg.vocab_size = vocab;
  cfg.dim = d;
  cfg.heads = 2;
  cfg.ffn_multiplier = 2;
  cfg.max_source_len = 32;
  cfg.max_target_len = 8;
  return cfg;
}

StackOutput random_stack(std::size_t d, Rng& rng, bool grad = false) {
  StackOutput out;
  out.cls = Tensor::randn({1, d}, rng, 1.0, grad);
  out.final[Stream::spa] = Tensor::randn({3, d}, rng, 1.0, grad);
  out.final[Stream::cap] = Tensor::randn({2, d}, rng, 1.0, grad);
  return out;
}

std::vector<double> param_values(ParameterStore& store, const std::string& prefix) {
  std::vector<double> out;
  for (auto* p : store.with_prefix(prefix)) {
    out.insert(out.end(), p->tensor.data().begin(), p->tensor.data().end());
  }
  return out;
}

}  // namespace

TEST_CASE("prepare_answer shifts right and keeps EOS") {
  auto a = prepare_answer({7, 8, kEos}, 8);
  CHECK(a.targets == std::vector<int>{7, 8, kEos});
  CHECK(a.decoder_input == std::vector<int>{kBos, 7, 8});
  CHECK_FALSE(a.truncated);
  auto padded = prepare_answer({7, 8, kEos, kPad, kPad, 9}, 8);
  CHECK(padded.targets == a.targets);
  auto cut = prepare_answer({6, 7, 8, 9, 10, kEos}, 4);
  CHECK(cut.truncated);
  CHECK(cut.targets == std::vector<int>{6, 7, 8, kEos});
  CHECK_THROWS_AS(prepare_answer({7, 8}, 8), xdial::DataError);
  CHECK_THROWS_AS(prepare_answer({kEos}, 8), xdial::DataError);
}

TEST_CASE("uniform logits give ln of the vocabulary") {
  ParameterStore store(1);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  for (auto& x : lm.output.weight.mutable_data()) x = 0.0;
  Rng rng(2);
  auto out = gen_loss(random_stack(8, rng), {9, 10, kEos}, lm, coupling);
  CHECK(out.loss.item() == doctest::Approx(std::log(64.0)).epsilon(1e-7));
  CHECK(out.logits.shape() == Shape{3, 64});
}

TEST_CASE("generation loss gradients match finite differences") {
  for (auto [precision, tol] : {std::pair{Precision::f64, 1e-6}, std::pair{Precision::f32, 1e-4}}) {
    for (int trial = 0; trial < 5; ++trial) {
      PrecisionScope f64(Precision::f64);
      ParameterStore store(10 + trial);
      ToyLMConfig cfg = small_lm(12, 4);
      cfg.encoder_layers = 1;
      cfg.decoder_layers = 1;
      ToyLM lm(store, "lm", cfg);
      Coupling coupling(store, "coupling", 3, 4);
      Rng rng(20 + trial);
      for (auto& p : store.params()) {
        for (auto& x : p.tensor.mutable_data()) x += std::normal_distribution<double>(0, 0.3)(rng);
      }
      auto stack = random_stack(3, rng, true);
      std::vector<Tensor> inputs{stack.cls, stack.final[Stream::spa], stack.final[Stream::cap]};
      for (auto& p : store.params()) inputs.push_back(p.tensor);
      for (auto& t : inputs) round_to_float(t);
      const std::vector<int> answer{static_cast<int>(6 + rng() % 6), static_cast<int>(6 + rng() % 6),
                                    static_cast<int>(6 + rng() % 6), kEos};
      auto r = gradcheck([&] { return gen_loss(stack, answer, lm, coupling).loss; }, inputs,
                         {precision, 1e-6, tol});
      CHECK_MESSAGE(r.ok, r.max_rel_error, " ", r.worst_input);
    }
  }
}

TEST_CASE("padding after EOS does not change the loss") {
  ParameterStore store(3);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  Rng rng(4);
  auto stack = random_stack(8, rng);
  const double a = gen_loss(stack, {9, 10, 11, kEos}, lm, coupling).loss.item();
  const double b = gen_loss(stack, {9, 10, 11, kEos, kPad}, lm, coupling).loss.item();
  const double c = gen_loss(stack, {9, 10, 11, kEos, kPad, kPad, kPad, kPad, kPad}, lm, coupling).loss.item();
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("decoder is causal") {
  ParameterStore store(5);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  Rng rng(6);
  for (auto& p : store.params()) {
    for (auto& x : p.tensor.mutable_data()) x += std::normal_distribution<double>(0, 0.2)(rng);
  }
  auto stack = random_stack(8, rng);
  const std::vector<int> answer{9, 10, 11, 12, 13, kEos};
  const auto base = gen_loss(stack, answer, lm, coupling).logits;
  for (std::size_t t = 0; t + 1 < answer.size(); ++t) {
    auto changed = answer;
    changed[t] = 40;
    const auto moved = gen_loss(stack, changed, lm, coupling).logits;
    for (std::size_t row = 0; row < answer.size(); ++row) {
      bool same = true;
      for (std::size_t v = 0; v < 64; ++v) same = same && base.at(row, v) == moved.at(row, v);
      CAPTURE(t);
      CAPTURE(row);
      CHECK(same == (row <= t));
    }
  }
}

TEST_CASE("loss equals the mean negative log-probability of the targets") {
  ParameterStore store(7);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  Rng rng(8);
  for (auto& p : store.params()) {
    for (auto& x : p.tensor.mutable_data()) x += std::normal_distribution<double>(0, 0.3)(rng);
  }
  auto out = gen_loss(random_stack(8, rng), {20, 21, 22, 23, kEos}, lm, coupling);
  double total = 0.0;
  for (std::size_t t = 0; t < out.targets.size(); ++t) {
    double mx = -1e300;
    for (std::size_t v = 0; v < 64; ++v) mx = std::max(mx, out.logits.at(t, v));
    double z = 0.0;
    for (std::size_t v = 0; v < 64; ++v) z += std::exp(out.logits.at(t, v) - mx);
    total -= out.logits.at(t, out.targets[t]) - mx - std::log(z);
  }
  CHECK(std::abs(out.loss.item() - total / out.targets.size()) <= 1e-6);
}

TEST_CASE("argmax ties go to the lowest id") {
  Tensor logits({2, 4}, {0.5, 2.0, 2.0, 1.0, 3.0, 3.0, 3.0, 3.0});
  CHECK(argmax_lowest(logits, 0) == 1);
  CHECK(argmax_lowest(logits, 1) == 0);
}

TEST_CASE("greedy decoding is deterministic and respects max_len") {
  ParameterStore store(9);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  Rng rng(10);
  auto stack = random_stack(8, rng);
  auto a = greedy_decode(stack, lm, coupling, 5);
  auto b = greedy_decode(stack, lm, coupling, 5);
  CHECK(a == b);
  CHECK(a.size() <= 5);
  CHECK(greedy_decode(stack, lm, coupling, 1).size() <= 1);
  CHECK_THROWS_AS(greedy_decode(stack, lm, coupling, 0), xdial::ConfigError);

  // All-zero output layer: every step ties, so the lowest id (PAD) wins.
  for (auto& x : lm.output.weight.mutable_data()) x = 0.0;
  CHECK(greedy_decode(stack, lm, coupling, 3) == std::vector<int>{kPad, kPad, kPad});
}

TEST_CASE("stage freeze policy") {
  ParameterStore store(11);
  Linear stack_part(store, "stack.w", 8, 8);
  ToyLM lm(store, "lm", small_lm());
  Coupling coupling(store, "coupling", 8, 16);
  Rng rng(12);
  const std::vector<int> answer{9, 10, kEos};

  auto stage1 = set_stage(store, 1);
  for (auto* p : stage1) {
    CHECK(p->name.rfind("lm.", 0) != 0);
    CHECK(p->name.rfind("coupling.", 0) != 0);
  }
  CHECK(stage1.size() == 2);

  auto run = [&](int stage, int steps) {
    auto params = set_stage(store, stage);
    AdamW opt;
    for (int s = 0; s < steps; ++s) {
      store.zero_grad();
      StackOutput out;
      out.cls = stack_part(Tensor::randn({1, 8}, rng, 1.0));
      out.final[Stream::cap] = stack_part(Tensor::randn({2, 8}, rng, 1.0));
      backward(gen_loss(out, answer, lm, coupling).loss);
      opt.step(params, 1e-3);
    }
  };
  const auto lm_before = param_values(store, "lm.");
  const auto coupling_before = param_values(store, "coupling.");
  run(2, 10);
  CHECK(param_values(store, "lm.") == lm_before);
  CHECK(param_values(store, "coupling.") != coupling_before);
  run(3, 1);
  CHECK(param_values(store, "lm.") != lm_before);
  CHECK_THROWS_AS(set_stage(store, 0), xdial::ConfigError);
  CHECK_THROWS_AS(set_stage(store, 4), xdial::ConfigError);
}

TEST_CASE("LM overfits 32 samples within 300 steps") {
  ParameterStore store(13);
  ToyLMConfig cfg = small_lm(64, 32);
  cfg.heads = 4;
  ToyLM lm(store, "lm", cfg);
  Coupling coupling(store, "coupling", 16, 32);
  Rng rng(14);
  std::vector<StackOutput> inputs;
  std::vector<std::vector<int>> answers;
  for (int i = 0; i < 32; ++i) {
    inputs.push_back(random_stack(16, rng));
    std::vector<int> a;
    const int len = 3 + static_cast<int>(rng() % 3);
    for (int t = 0; t < len; ++t) a.push_back(6 + static_cast<int>(rng() % 58));
    a.push_back(kEos);
    answers.push_back(a);
  }
  AdamWConfig ocfg;
  ocfg.weight_decay = 0.0;
  AdamW opt(ocfg);
  auto params = set_stage(store, 3);
  const std::size_t batch = 8;
  for (int step = 0; step < 300; ++step) {
    store.zero_grad();
    std::vector<Tensor> losses;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t i = (step * batch + b) % 32;
      losses.push_back(gen_loss(inputs[i], answers[i], lm, coupling).loss);
    }
    backward(scale(sum(stack_scalars(losses, {batch})), 1.0 / batch));
    opt.step(params, 3e-3);
  }
  std::size_t correct = 0, total = 0;
  for (int i = 0; i < 32; ++i) {
    NoGradGuard no_grad;
    auto out = gen_loss(inputs[i], answers[i], lm, coupling);
    correct += out.correct();
    total += out.targets.size();
  }
  CHECK(static_cast<double>(correct) / total >= 0.95);
}
