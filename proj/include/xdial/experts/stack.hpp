// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xdial/numerics/nn.hpp"

namespace xdial::experts {

inline constexpr std::size_t kNumStreams = 4;
inline constexpr std::size_t kNumExperts = 6;

// Concatenation order of the streams.
enum class Stream { spa = 0, tmp = 1, cap = 2, ctx = 3 };
enum class ExpertId { spa = 0, tmp = 1, vis = 2, cap = 3, ctx = 4, fus = 5 };

inline constexpr std::array<Stream, kNumStreams> kStreams{Stream::spa, Stream::tmp, Stream::cap,
                                                           Stream::ctx};

const char* name(Stream s);
const char* name(ExpertId e);
Stream parse_stream(const std::string& text);  // ConfigError on unknown names
ExpertId own_expert(Stream s);
std::optional<Stream> owner(ExpertId e);

inline std::size_t index(Stream s) { return static_cast<std::size_t>(s); }
inline std::size_t index(ExpertId e) { return static_cast<std::size_t>(e); }

using Availability = std::array<bool, kNumStreams>;

// Which streams exist for a training stage and input type.
// Stage 2 has no image data; asking for it is a ConfigError.
Availability availability_for(int stage, bool is_video);

struct ModalityBundle {
  std::array<num::Tensor, kNumStreams> streams;  // undefined when unavailable

  bool available(Stream s) const { return streams[index(s)].defined(); }
  num::Tensor& operator[](Stream s) { return streams[index(s)]; }
  const num::Tensor& operator[](Stream s) const { return streams[index(s)]; }
  Availability availability() const;
  std::size_t token_count() const;
};

// stream -> expert that processes it in the modality-expert layers.
using RoutingMap = std::array<ExpertId, kNumStreams>;
RoutingMap identity_routing();
bool is_identity(const RoutingMap& map);

struct ExpertStackConfig {
  std::size_t layers = 4;         // N (12 at full scale)
  std::size_t expert_layers = 3;  // L (9 at full scale)
  std::size_t dim = 64;           // D (1024 at full scale)
  std::size_t heads = 4;
  std::size_t ffn_multiplier = 4;
  RoutingMap routing = identity_routing();
  // Ablations: all layers use the fusion expert; or a single visual stream
  // without the spatial and temporal experts.
  bool modality_experts = true;
  bool separate_spatial_temporal = true;
};

// Exchanges the experts of each pair. Throws ConfigError if a stream appears
// in more than one pair.
ExpertStackConfig swap_experts(ExpertStackConfig cfg,
                               const std::vector<std::pair<Stream, Stream>>& pairs);
// "spa:tmp,cap:ctx" -> pairs. Empty text -> no pairs.
std::vector<std::pair<Stream, Stream>> parse_swaps(const std::string& text);

struct LayerAudit {
  bool fusion = false;
  std::array<std::optional<ExpertId>, kNumStreams> routed;
  std::array<int, kNumExperts> invocations{};

  int total_invocations() const;
};

struct RoutingAudit {
  std::vector<LayerAudit> layers;
};

struct StackOutput {
  num::Tensor cls;           // [1, D] final classification-token state
  ModalityBundle final;      // after the last layer and the output norm
  ModalityBundle expert_end; // after layer L
  // [1 + tokens, D]: cls followed by the streams in order.
  num::Tensor sequence() const;
};

class ExpertStack {
 public:
  ExpertStack() = default;
  ExpertStack(num::ParameterStore& store, const std::string& name, ExpertStackConfig config);

  const ExpertStackConfig& config() const { return config_; }
  bool is_expert_layer(std::size_t layer) const;  // layer is 1-based

  StackOutput forward(const ModalityBundle& input, RoutingAudit* audit = nullptr) const {
    return forward(input, config_.routing, audit);
  }
  StackOutput forward(const ModalityBundle& input, const RoutingMap& routing,
                      RoutingAudit* audit = nullptr) const;

  struct Layer {
    num::LayerNorm attention_norm;
    num::MultiHeadAttention attention;
    num::LayerNorm expert_norm;
    std::array<std::optional<num::FeedForward>, kNumExperts> experts;
  };

  num::Tensor cls;
  num::Tensor type_embedding;  // [4, D]
  std::vector<Layer> layers;
  num::LayerNorm output_norm;

 private:
  void check_routing(const ModalityBundle& input, const RoutingMap& routing) const;

  ExpertStackConfig config_;
};

// Runs the stack without gradients and reports which expert saw each stream.
RoutingAudit route_token_audit(const ExpertStack& stack, const ModalityBundle& input,
                               const RoutingMap& routing);

}  // namespace xdial::experts
