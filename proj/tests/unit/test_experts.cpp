// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "xdial/common/errors.hpp"
#include "xdial/experts/encoder.hpp"
#include "xdial/numerics/gradcheck.hpp"

using namespace xdial::num;
using namespace xdial::experts;

namespace {

ExpertStackConfig small(std::size_t n = 3, std::size_t l = 2, std::size_t d = 8) {
  ExpertStackConfig cfg;
  cfg.layers = n;
  cfg.expert_layers = l;
  cfg.dim = d;
  cfg.heads = 2;
  cfg.ffn_multiplier = 2;
  return cfg;
}

ModalityBundle random_bundle(Availability av, std::size_t d, Rng& rng) {
  const std::array<std::size_t, 4> lengths{4, 4, 3, 5};
  ModalityBundle b;
  for (Stream s : kStreams) {
    if (av[index(s)]) b[s] = Tensor::randn({lengths[index(s)], d}, rng, 1.0);
  }
  return b;
}

// Distinct, non-trivial parameters so that expert outputs differ.
void perturb(ParameterStore& store, double amount, Rng& rng) {
  std::normal_distribution<double> dist(0.0, amount);
  for (auto& p : store.params()) {
    for (auto& x : p.tensor.mutable_data()) x += dist(rng);
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

bool identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

struct Pattern {
  int stage;
  bool video;
  int active;  // expert invocations per modality-expert layer
};

}  // namespace

TEST_CASE("availability matrix by stage and input type") {
  CHECK(availability_for(1, true) == Availability{true, true, true, false});
  CHECK(availability_for(1, false) == Availability{true, false, true, false});
  CHECK(availability_for(2, true) == Availability{true, true, true, true});
  CHECK(availability_for(3, true) == Availability{true, true, true, true});
  CHECK(availability_for(3, false) == Availability{true, false, true, true});
  CHECK_THROWS_AS(availability_for(2, false), xdial::ConfigError);
  CHECK_THROWS_AS(availability_for(4, true), xdial::ConfigError);
}

TEST_CASE("twelve layers with nine expert layers") {
  ParameterStore store(1);
  auto cfg = small(12, 9, 8);
  ExpertStack stack(store, "stack", cfg);
  int expert = 0, fusion = 0;
  for (std::size_t l = 1; l <= 12; ++l) (stack.is_expert_layer(l) ? expert : fusion)++;
  CHECK(expert == 9);
  CHECK(fusion == 3);
  Rng rng(2);
  auto audit = route_token_audit(stack, random_bundle(availability_for(2, true), 8, rng),
                                 identity_routing());
  REQUIRE(audit.layers.size() == 12);
  for (std::size_t l = 9; l < 12; ++l) {
    CHECK(audit.layers[l].fusion);
    for (Stream s : kStreams) CHECK(audit.layers[l].routed[index(s)] == ExpertId::fus);
    CHECK(audit.layers[l].total_invocations() == 1);
  }
  CHECK(audit.layers[2].routed == std::array<std::optional<ExpertId>, 4>{
                                      ExpertId::spa, ExpertId::tmp, ExpertId::cap, ExpertId::ctx});
}

TEST_CASE("routing is exclusive for every availability pattern") {
  ParameterStore store(3);
  ExpertStack stack(store, "stack", small(4, 3, 8));
  Rng rng(4);
  for (auto pattern : {Pattern{1, true, 4}, Pattern{2, true, 5}, Pattern{3, true, 5},
                       Pattern{1, false, 3}, Pattern{3, false, 4}}) {
    CAPTURE(pattern.stage);
    CAPTURE(pattern.video);
    const auto av = availability_for(pattern.stage, pattern.video);
    auto audit = route_token_audit(stack, random_bundle(av, 8, rng), identity_routing());
    REQUIRE(audit.layers.size() == 4);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto& layer = audit.layers[l];
      CHECK_FALSE(layer.fusion);
      CHECK(layer.total_invocations() == pattern.active);
      CHECK(layer.invocations[index(ExpertId::fus)] == 0);
      CHECK(layer.invocations[index(ExpertId::vis)] == 1);
      for (Stream s : kStreams) {
        if (av[index(s)]) {
          CHECK(layer.routed[index(s)] == own_expert(s));
          CHECK(layer.invocations[index(own_expert(s))] == 1);
        } else {
          CHECK_FALSE(layer.routed[index(s)].has_value());
          CHECK(layer.invocations[index(own_expert(s))] == 0);
        }
      }
      if (!pattern.video) CHECK(layer.invocations[index(ExpertId::tmp)] == 0);
      if (pattern.stage == 1) CHECK(layer.invocations[index(ExpertId::ctx)] == 0);
    }
    const auto& last = audit.layers[3];
    CHECK(last.fusion);
    CHECK(last.invocations[index(ExpertId::fus)] == 1);
    CHECK(last.total_invocations() == 1);
  }
}

TEST_CASE("swap helpers") {
  auto cfg = swap_experts(small(), {{Stream::spa, Stream::tmp}});
  CHECK(cfg.routing == RoutingMap{ExpertId::tmp, ExpertId::spa, ExpertId::cap, ExpertId::ctx});
  cfg = swap_experts(small(), parse_swaps("spa:cap,tmp:ctx"));
  CHECK(cfg.routing == RoutingMap{ExpertId::cap, ExpertId::ctx, ExpertId::spa, ExpertId::tmp});
  CHECK(is_identity(swap_experts(small(), {}).routing));
  CHECK_THROWS_AS(swap_experts(small(), parse_swaps("spa:tmp,tmp:cap")), xdial::ConfigError);
  CHECK_THROWS_AS(swap_experts(small(), parse_swaps("spa:spa")), xdial::ConfigError);
  CHECK_THROWS_AS(parse_swaps("spa-tmp"), xdial::ConfigError);
  CHECK_THROWS_AS(parse_swaps("spa:img"), xdial::ConfigError);
  CHECK(parse_swaps("").empty());
}

TEST_CASE("swapped routing shows in the audit") {
  ParameterStore store(5);
  ExpertStack stack(store, "stack", small());
  Rng rng(6);
  auto bundle = random_bundle(availability_for(3, true), 8, rng);
  auto routing = swap_experts(small(), {{Stream::spa, Stream::tmp}}).routing;
  auto audit = route_token_audit(stack, bundle, routing);
  CHECK(audit.layers[0].routed[index(Stream::spa)] == ExpertId::tmp);
  CHECK(audit.layers[0].routed[index(Stream::tmp)] == ExpertId::spa);
  CHECK(audit.layers[0].routed[index(Stream::cap)] == ExpertId::cap);

  routing = swap_experts(small(), {{Stream::cap, Stream::ctx}}).routing;
  audit = route_token_audit(stack, bundle, routing);
  CHECK(audit.layers[1].routed[index(Stream::cap)] == ExpertId::ctx);
  CHECK(audit.layers[1].routed[index(Stream::ctx)] == ExpertId::cap);
}

TEST_CASE("non-identity swaps change the output and keep shapes") {
  ParameterStore store(7);
  ExpertStack stack(store, "stack", small());
  Rng rng(8);
  perturb(store, 0.3, rng);
  auto bundle = random_bundle(availability_for(3, true), 8, rng);
  const auto base = stack.forward(bundle);
  const auto same = stack.forward(bundle, swap_experts(small(), {}).routing);
  CHECK(identical(base.sequence(), same.sequence()));
  for (const char* text : {"spa:tmp", "cap:ctx", "spa:cap,tmp:ctx", "spa:ctx,tmp:cap"}) {
    CAPTURE(text);
    auto swapped = stack.forward(bundle, swap_experts(small(), parse_swaps(text)).routing);
    for (Stream s : kStreams) CHECK(swapped.final[s].shape() == base.final[s].shape());
    CHECK(max_abs_diff(base.sequence(), swapped.sequence()) > 0.0);
  }
}

TEST_CASE("swaps naming unavailable streams are routing errors") {
  ParameterStore store(9);
  ExpertStack stack(store, "stack", small());
  Rng rng(10);
  auto image = random_bundle(availability_for(3, false), 8, rng);
  CHECK_THROWS_AS(stack.forward(image, swap_experts(small(), parse_swaps("spa:tmp")).routing),
                  xdial::RoutingError);
  auto stage1 = random_bundle(availability_for(1, true), 8, rng);
  CHECK_THROWS_AS(stack.forward(stage1, swap_experts(small(), parse_swaps("cap:ctx")).routing),
                  xdial::RoutingError);
  CHECK_NOTHROW(stack.forward(image, swap_experts(small(), parse_swaps("cap:ctx")).routing));
}

TEST_CASE("width mismatch is a shape error") {
  ParameterStore store(11);
  ExpertStack stack(store, "stack", small());
  ModalityBundle b;
  b[Stream::cap] = Tensor::zeros({3, 6});
  CHECK_THROWS_AS(stack.forward(b), xdial::ShapeError);
  CHECK_THROWS_AS(stack.forward(ModalityBundle{}), xdial::ShapeError);
  CHECK_THROWS_AS(ExpertStack(store, "bad", small(2, 3)), xdial::ConfigError);
}

TEST_CASE("experts with zero output layers leave attention and residual only") {
  PrecisionScope f64(Precision::f64);
  ParameterStore store(12);
  auto cfg = small(3, 2, 8);
  ExpertStack stack(store, "stack", cfg);
  Rng rng(13);
  perturb(store, 0.2, rng);
  for (auto& layer : stack.layers) {
    for (auto& e : layer.experts) {
      if (!e) continue;
      for (auto& x : e->fc2.weight.mutable_data()) x = 0.0;
      for (auto& x : e->fc2.bias.mutable_data()) x = 0.0;
    }
  }
  auto bundle = random_bundle(availability_for(2, true), 8, rng);
  auto out = stack.forward(bundle);

  std::vector<Tensor> parts{stack.cls};
  for (Stream s : kStreams) {
    parts.push_back(add(bundle[s], reshape(slice_rows(stack.type_embedding, index(s), index(s) + 1), {8})));
  }
  Tensor x = concat_rows(parts);
  for (const auto& layer : stack.layers) x = add(x, layer.attention(layer.attention_norm(x)));
  Tensor expect = stack.output_norm(x);
  CHECK(identical(out.sequence(), expect));
}

TEST_CASE("stack output preserves stream lengths and is reproducible") {
  Rng rng(14);
  auto bundle = random_bundle(availability_for(3, true), 8, rng);
  ParameterStore a(15), b(15);
  ExpertStack sa(a, "stack", small()), sb(b, "stack", small());
  auto oa = sa.forward(bundle);
  auto ob = sb.forward(bundle);
  CHECK(identical(oa.sequence(), ob.sequence()));
  for (Stream s : kStreams) {
    CHECK(oa.final[s].shape() == bundle[s].shape());
    CHECK(oa.expert_end[s].shape() == bundle[s].shape());
  }
  CHECK(oa.cls.shape() == Shape{1, 8});
  CHECK(oa.sequence().shape() == Shape{17, 8});
}

TEST_CASE("ablations: fusion-only stack and single visual stream") {
  Rng rng(16);
  {
    ParameterStore store(17);
    auto cfg = small();
    cfg.modality_experts = false;
    ExpertStack stack(store, "stack", cfg);
    auto audit = route_token_audit(stack, random_bundle(availability_for(2, true), 8, rng),
                                   identity_routing());
    for (const auto& layer : audit.layers) {
      CHECK(layer.fusion);
      CHECK(layer.total_invocations() == 1);
    }
  }
  {
    ParameterStore store(18);
    auto cfg = small();
    cfg.separate_spatial_temporal = false;
    ExpertStack stack(store, "stack", cfg);
    CHECK_FALSE(store.contains("stack.layer1.expert.spa.fc1.weight"));
    auto av = availability_for(2, true);
    av[index(Stream::tmp)] = false;
    auto audit = route_token_audit(stack, random_bundle(av, 8, rng), identity_routing());
    CHECK(audit.layers[0].routed[index(Stream::spa)] == ExpertId::vis);
    CHECK(audit.layers[0].invocations[index(ExpertId::spa)] == 0);
    CHECK(audit.layers[0].total_invocations() == 3);
    CHECK_THROWS_AS(stack.forward(random_bundle(availability_for(2, true), 8, rng)),
                    xdial::ConfigError);
  }
}

TEST_CASE("stack gradients match finite differences") {
  PrecisionScope f64(Precision::f64);
  ParameterStore store(19);
  auto cfg = small(2, 1, 4);
  ExpertStack stack(store, "stack", cfg);
  Rng rng(20);
  perturb(store, 0.2, rng);
  for (int trial = 0; trial < 2; ++trial) {
    ModalityBundle bundle;
    bundle[Stream::spa] = Tensor::randn({2, 4}, rng, 1.0, true);
    bundle[Stream::tmp] = Tensor::randn({2, 4}, rng, 1.0, true);
    bundle[Stream::cap] = Tensor::randn({2, 4}, rng, 1.0, true);
    std::vector<Tensor> inputs{bundle[Stream::spa], bundle[Stream::tmp], bundle[Stream::cap]};
    for (auto& p : store.params()) inputs.push_back(p.tensor);
    Tensor w = Tensor::randn({7, 4}, rng, 1.0);
    auto r = gradcheck([&] { return sum(mul(stack.forward(bundle).sequence(), w)); }, inputs,
                       {Precision::f64, 1e-6, 1e-6});
    CHECK_MESSAGE(r.ok, r.max_rel_error, " ", r.worst_input);
  }
}

TEST_CASE("multimodal encoder builds every stream") {
  ParameterStore store(21);
  EncoderConfig cfg;
  cfg.stack = small(3, 2, 16);
  cfg.patch_embed_width = 8;
  cfg.vocab_size = 20;
  cfg.max_text_len = 6;
  MultimodalEncoder enc(store, "enc", cfg);
  Rng rng(22);
  EncoderInput in;
  in.frames = Tensor::uniform({4, 3, 56, 56}, rng, 0.0, 1.0);
  in.caption = {6, 7, 8};
  in.context = {9, 10, 11, 12, 13, 14, 15, 16};
  in.availability = availability_for(3, true);
  auto out = enc.forward(in);
  CHECK(out.final[Stream::spa].shape() == Shape{16, 16});
  CHECK(out.final[Stream::tmp].shape() == Shape{16, 16});
  CHECK(out.final[Stream::cap].shape() == Shape{3, 16});
  CHECK(out.final[Stream::ctx].shape() == Shape{6, 16});  // truncated to the most recent tokens

  EncoderInput image = in;
  image.frames = Tensor::uniform({1, 3, 56, 56}, rng, 0.0, 1.0);
  image.availability = availability_for(3, false);
  auto img = enc.forward(image);
  CHECK_FALSE(img.final.available(Stream::tmp));
  CHECK(img.final[Stream::spa].shape() == Shape{4, 16});

  in.caption = {6, 99};
  CHECK_THROWS_AS(enc.forward(in), xdial::DataError);
  in.caption = {};
  CHECK_THROWS_AS(enc.forward(in), xdial::DataError);
}
