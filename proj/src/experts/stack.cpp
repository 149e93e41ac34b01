// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/experts/stack.hpp"

#include <sstream>

#include "xdial/common/errors.hpp"

namespace xdial::experts {

using num::Tensor;

namespace {

constexpr std::array<const char*, kNumStreams> kStreamNames{"spa", "tmp", "cap", "ctx"};
constexpr std::array<const char*, kNumExperts> kExpertNames{"spa", "tmp", "vis", "cap", "ctx", "fus"};

}  // namespace

const char* name(Stream s) { return kStreamNames[index(s)]; }
const char* name(ExpertId e) { return kExpertNames[index(e)]; }

Stream parse_stream(const std::string& text) {
  for (Stream s : kStreams) {
    if (text == name(s)) return s;
  }
  throw ConfigError("unknown stream '" + text + "' (expected spa, tmp, cap or ctx)");
}

ExpertId own_expert(Stream s) {
  switch (s) {
    case Stream::spa: return ExpertId::spa;
    case Stream::tmp: return ExpertId::tmp;
    case Stream::cap: return ExpertId::cap;
    case Stream::ctx: return ExpertId::ctx;
  }
  return ExpertId::fus;
}

std::optional<Stream> owner(ExpertId e) {
  switch (e) {
    case ExpertId::spa: return Stream::spa;
    case ExpertId::tmp: return Stream::tmp;
    case ExpertId::cap: return Stream::cap;
    case ExpertId::ctx: return Stream::ctx;
    default: return std::nullopt;
  }
}

Availability availability_for(int stage, bool is_video) {
  switch (stage) {
    case 1:
      return is_video ? Availability{true, true, true, false} : Availability{true, false, true, false};
    case 2:
      if (!is_video) throw ConfigError("stage 2 trains on video dialogs only; got image input");
      return {true, true, true, true};
    case 3:
      return is_video ? Availability{true, true, true, true} : Availability{true, false, true, true};
    default:
      throw ConfigError("invalid stage " + std::to_string(stage) + " (expected 1, 2 or 3)");
  }
}

Availability ModalityBundle::availability() const {
  Availability out{};
  for (Stream s : kStreams) out[index(s)] = available(s);
  return out;
}

std::size_t ModalityBundle::token_count() const {
  std::size_t n = 0;
  for (const auto& t : streams) {
    if (t.defined()) n += t.dim(0);
  }
  return n;
}

RoutingMap identity_routing() { return {ExpertId::spa, ExpertId::tmp, ExpertId::cap, ExpertId::ctx}; }

bool is_identity(const RoutingMap& map) { return map == identity_routing(); }

ExpertStackConfig swap_experts(ExpertStackConfig cfg,
                               const std::vector<std::pair<Stream, Stream>>& pairs) {
  std::array<bool, kNumStreams> used{};
  for (const auto& [a, b] : pairs) {
    if (a == b || used[index(a)] || used[index(b)]) {
      throw ConfigError(std::string("expert swap pairs overlap at ") + name(used[index(a)] ? a : b));
    }
    used[index(a)] = used[index(b)] = true;
    std::swap(cfg.routing[index(a)], cfg.routing[index(b)]);
  }
  return cfg;
}

std::vector<std::pair<Stream, Stream>> parse_swaps(const std::string& text) {
  std::vector<std::pair<Stream, Stream>> pairs;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("swap '" + item + "' must look like stream:stream");
    }
    pairs.emplace_back(parse_stream(item.substr(0, colon)), parse_stream(item.substr(colon + 1)));
  }
  return pairs;
}

int LayerAudit::total_invocations() const {
  int n = 0;
  for (int c : invocations) n += c;
  return n;
}

Tensor StackOutput::sequence() const {
  std::vector<Tensor> parts{cls};
  for (const auto& t : final.streams) {
    if (t.defined()) parts.push_back(t);
  }
  return num::concat_rows(parts);
}

ExpertStack::ExpertStack(num::ParameterStore& store, const std::string& name,
                         ExpertStackConfig config)
    : config_(config) {
  if (config.layers == 0 || config.expert_layers == 0 || config.expert_layers > config.layers) {
    throw ConfigError("expert stack needs 1 <= L <= N, got L=" +
                      std::to_string(config.expert_layers) + " N=" + std::to_string(config.layers));
  }
  const std::size_t d = config.dim;
  const std::size_t hidden = config.ffn_multiplier * d;
  cls = store.normal(name + ".cls", {1, d}, num::kInitStd);
  type_embedding = store.normal(name + ".type", {kNumStreams, d}, num::kInitStd);
  for (std::size_t l = 1; l <= config.layers; ++l) {
    const std::string prefix = name + ".layer" + std::to_string(l);
    Layer layer;
    layer.attention_norm = num::LayerNorm(store, prefix + ".attn_norm", d);
    layer.attention = num::MultiHeadAttention(store, prefix + ".attn", d, config.heads);
    layer.expert_norm = num::LayerNorm(store, prefix + ".expert_norm", d);
    auto make = [&](ExpertId e) {
      layer.experts[index(e)].emplace(store, prefix + ".expert." + experts::name(e), d, hidden);
    };
    if (is_expert_layer(l)) {
      if (config.separate_spatial_temporal) {
        make(ExpertId::spa);
        make(ExpertId::tmp);
      }
      make(ExpertId::vis);
      make(ExpertId::cap);
      make(ExpertId::ctx);
    } else {
      make(ExpertId::fus);
    }
    layers.push_back(std::move(layer));
  }
  output_norm = num::LayerNorm(store, name + ".output_norm", d);
}

bool ExpertStack::is_expert_layer(std::size_t layer) const {
  return config_.modality_experts && layer <= config_.expert_layers;
}

void ExpertStack::check_routing(const ModalityBundle& input, const RoutingMap& routing) const {
  std::array<int, kNumExperts> seen{};
  for (Stream s : kStreams) {
    const auto target = owner(routing[index(s)]);
    if (!target) {
      throw RoutingError(std::string("stream ") + name(s) + " routed to non-modality expert " +
                         name(routing[index(s)]));
    }
    if (++seen[index(routing[index(s)])] > 1) {
      throw RoutingError(std::string("expert ") + name(routing[index(s)]) + " receives two streams");
    }
    if (*target == s) continue;
    if (!input.available(s) || !input.available(*target)) {
      throw RoutingError(std::string("cannot swap ") + name(s) + " with " + name(*target) +
                         ": stream " + name(input.available(s) ? *target : s) +
                         " is not available for this input");
    }
    if (!config_.separate_spatial_temporal && (s == Stream::spa || *target == Stream::spa)) {
      throw RoutingError("spatial/temporal experts are disabled; spa cannot be swapped");
    }
  }
}

StackOutput ExpertStack::forward(const ModalityBundle& input, const RoutingMap& routing,
                                 RoutingAudit* audit) const {
  const std::size_t d = config_.dim;
  if (!config_.separate_spatial_temporal && input.available(Stream::tmp)) {
    throw ConfigError("single visual stream mode expects no tmp stream");
  }
  check_routing(input, routing);

  // Segment i of parts is cls (i = 0) or the i-th available stream.
  std::vector<Tensor> parts{cls};
  std::vector<Stream> order;
  for (Stream s : kStreams) {
    if (!input.available(s)) continue;
    const Tensor& t = input[s];
    if (t.rank() != 2 || t.dim(1) != d || t.dim(0) == 0) {
      throw ShapeError(std::string("stream ") + name(s) + " must be [n>0, " + std::to_string(d) +
                       "], got " + num::to_string(t.shape()));
    }
    const Tensor type = num::reshape(num::slice_rows(type_embedding, index(s), index(s) + 1), {d});
    parts.push_back(num::add(t, type));
    order.push_back(s);
  }
  if (order.empty()) throw ShapeError("expert stack input has no available stream");

  auto split = [&](const Tensor& x) {
    std::size_t row = 0;
    for (auto& p : parts) {
      const std::size_t n = p.dim(0);
      p = num::slice_rows(x, row, row + n);
      row += n;
    }
  };
  auto slot = [&](Stream s) -> Tensor& {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] == s) return parts[i + 1];
    }
    throw ShapeError(std::string("stream ") + name(s) + " is not available");
  };
  auto bundle_from_parts = [&](bool normalize) {
    ModalityBundle out;
    for (std::size_t i = 0; i < order.size(); ++i) {
      out[order[i]] = normalize ? output_norm(parts[i + 1]) : parts[i + 1];
    }
    return out;
  };

  StackOutput result;
  for (std::size_t l = 1; l <= layers.size(); ++l) {
    const Layer& layer = layers[l - 1];
    LayerAudit record;
    Tensor x = num::concat_rows(parts);
    x = num::add(x, layer.attention(layer.attention_norm(x)));
    auto apply = [&](ExpertId e, const Tensor& h) {
      ++record.invocations[index(e)];
      return num::add(h, (*layer.experts[index(e)])(layer.expert_norm(h)));
    };
    if (is_expert_layer(l)) {
      record.fusion = false;
      split(x);
      const bool spa = input.available(Stream::spa);
      const bool tmp = input.available(Stream::tmp);
      if (config_.separate_spatial_temporal) {
        for (Stream s : {Stream::spa, Stream::tmp}) {
          if (!input.available(s)) continue;
          const ExpertId e = routing[index(s)];
          record.routed[index(s)] = e;
          slot(s) = apply(e, slot(s));
        }
      }
      if (spa || tmp) {
        std::vector<Tensor> visual;
        if (spa) visual.push_back(slot(Stream::spa));
        if (tmp) visual.push_back(slot(Stream::tmp));
        const Tensor v = apply(ExpertId::vis, visual.size() == 1 ? visual[0] : num::concat_rows(visual));
        std::size_t row = 0;
        for (Stream s : {Stream::spa, Stream::tmp}) {
          if (!input.available(s)) continue;
          Tensor& t = slot(s);
          const std::size_t n = t.dim(0);
          t = visual.size() == 1 ? v : num::slice_rows(v, row, row + n);
          row += n;
          if (!config_.separate_spatial_temporal) record.routed[index(s)] = ExpertId::vis;
        }
      }
      for (Stream s : {Stream::cap, Stream::ctx}) {
        if (!input.available(s)) continue;
        const ExpertId e = routing[index(s)];
        record.routed[index(s)] = e;
        slot(s) = apply(e, slot(s));
      }
    } else {
      record.fusion = true;
      x = apply(ExpertId::fus, x);
      split(x);
      for (Stream s : order) record.routed[index(s)] = ExpertId::fus;
    }
    if (audit) audit->layers.push_back(record);
    if (l == config_.expert_layers) result.expert_end = bundle_from_parts(false);
  }
  result.cls = output_norm(parts[0]);
  result.final = bundle_from_parts(true);
  return result;
}

RoutingAudit route_token_audit(const ExpertStack& stack, const ModalityBundle& input,
                               const RoutingMap& routing) {
  num::NoGradGuard no_grad;
  RoutingAudit audit;
  stack.forward(input, routing, &audit);
  return audit;
}

}  // namespace xdial::experts
