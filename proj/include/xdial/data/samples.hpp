// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xdial/data/text.hpp"
#include "xdial/numerics/tensor.hpp"

namespace xdial::data {

inline constexpr std::size_t kNumCandidates = 100;

struct CaptionSample {
  std::string id;
  std::string visual;  // payload path, relative to the JSONL file unless absolute
  bool is_video = false;
  std::string caption;
};

struct DialogSample {
  std::string id;
  std::string visual;
  bool is_video = false;
  std::string caption;
  std::vector<std::pair<std::string, std::string>> history;
  std::string question;
  std::string answer;
  std::vector<std::string> candidates;  // empty or exactly 100
  std::optional<int> gt_index;
  std::vector<double> relevance;  // empty or one per candidate
};

enum class Schema { caption, dialog };

struct Dataset {
  Schema schema = Schema::caption;
  std::string directory;  // for resolving relative visual paths
  std::vector<CaptionSample> captions;
  std::vector<DialogSample> dialogs;

  std::size_t size() const { return schema == Schema::caption ? captions.size() : dialogs.size(); }
  bool is_video(std::size_t i) const;
  const std::string& caption(std::size_t i) const;
  std::string visual_path(std::size_t i) const;
};

// One JSON object per line. Malformed lines raise DataError and missing or
// invalid fields raise SchemaError; both name the line. Blank lines are skipped.
Dataset load_jsonl(const std::string& path, Schema schema);
// Caption schema if the first record has no "question" field, dialog otherwise.
Dataset load_any(const std::string& path);

std::string to_json_line(const CaptionSample& s);
std::string to_json_line(const DialogSample& s);

// "question: q1 answer: a1 ... question: q" keeping the most recent history
// rounds whose tokens fit in budget (0 = unlimited). The current question is
// always kept.
std::string build_context(const DialogSample& s, std::size_t token_budget = 0);

// Raw visual payload: text header "F C H W\n" then F*C*H*W little-endian f32.
void write_visual(const std::string& path, const num::Tensor& frames);
num::Tensor read_visual(const std::string& path);

// floor((i + 0.5) * total / count) for i < count.
std::vector<std::size_t> sample_frame_indices(std::size_t total, std::size_t count);
// Loads a payload and keeps `count` uniformly spaced frames (1 for images).
num::Tensor load_frames(const std::string& path, std::size_t count);

}  // namespace xdial::data
