// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/data/samples.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "xdial/common/errors.hpp"

namespace xdial::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes little-endian");

bool Dataset::is_video(std::size_t i) const {
  return schema == Schema::caption ? captions.at(i).is_video : dialogs.at(i).is_video;
}

const std::string& Dataset::caption(std::size_t i) const {
  return schema == Schema::caption ? captions.at(i).caption : dialogs.at(i).caption;
}

std::string Dataset::visual_path(std::size_t i) const {
  const std::string& v = schema == Schema::caption ? captions.at(i).visual : dialogs.at(i).visual;
  const fs::path p(v);
  return p.is_absolute() || directory.empty() ? v : (fs::path(directory) / p).string();
}

namespace {

class LineReader {
 public:
  LineReader(const json& j, std::size_t line) : j_(j), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw SchemaError("line " + std::to_string(line_) + ": field '" + field + "' " + what);
  }

  const json& need(const std::string& field) const {
    if (!j_.contains(field)) fail(field, "is missing");
    return j_.at(field);
  }

  std::string str(const std::string& field) const {
    const json& v = need(field);
    if (!v.is_string()) fail(field, "must be a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& field) const {
    const json& v = need(field);
    if (!v.is_boolean()) fail(field, "must be a boolean");
    return v.get<bool>();
  }

  std::vector<std::string> strings(const std::string& field) const {
    const json& v = need(field);
    if (!v.is_array()) fail(field, "must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) fail(field, "must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  const json& raw() const { return j_; }
  std::size_t line() const { return line_; }

 private:
  const json& j_;
  std::size_t line_;
};

CaptionSample parse_caption(const LineReader& r) {
  CaptionSample s;
  s.id = r.str("id");
  s.visual = r.str("visual");
  s.is_video = r.boolean("is_video");
  s.caption = r.str("caption");
  if (split_words(s.caption).empty()) r.fail("caption", "must not be empty");
  return s;
}

DialogSample parse_dialog(const LineReader& r) {
  DialogSample s;
  s.id = r.str("id");
  s.visual = r.str("visual");
  s.is_video = r.boolean("is_video");
  s.caption = r.str("caption");
  s.question = r.str("question");
  s.answer = r.str("answer");
  if (split_words(s.answer).empty()) r.fail("answer", "must not be empty");
  const json& history = r.need("history");
  if (!history.is_array()) r.fail("history", "must be an array of [question, answer] pairs");
  for (const auto& round : history) {
    if (!round.is_array() || round.size() != 2 || !round[0].is_string() || !round[1].is_string()) {
      r.fail("history", "must be an array of [question, answer] pairs");
    }
    s.history.emplace_back(round[0].get<std::string>(), round[1].get<std::string>());
  }
  const json& j = r.raw();
  if (j.contains("candidates")) {
    s.candidates = r.strings("candidates");
    if (s.candidates.size() != kNumCandidates) {
      r.fail("candidates", "must hold exactly " + std::to_string(kNumCandidates) + " entries, got " +
                               std::to_string(s.candidates.size()));
    }
    const json& gt = r.need("gt_index");
    if (!gt.is_number_integer()) r.fail("gt_index", "must be an integer");
    const int g = gt.get<int>();
    if (g < 0 || static_cast<std::size_t>(g) >= s.candidates.size()) r.fail("gt_index", "is out of range");
    if (s.candidates[static_cast<std::size_t>(g)] != s.answer) {
      r.fail("gt_index", "must point at the answer text");
    }
    s.gt_index = g;
    if (j.contains("relevance")) {
      const json& rel = j.at("relevance");
      if (!rel.is_array() || rel.size() != s.candidates.size()) {
        r.fail("relevance", "must hold one value per candidate");
      }
      for (const auto& x : rel) {
        if (!x.is_number()) r.fail("relevance", "must be numbers");
        const double v = x.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) r.fail("relevance", "values must be in [0, 1]");
        s.relevance.push_back(v);
      }
    }
  } else if (j.contains("gt_index") || j.contains("relevance")) {
    r.fail("candidates", "is required when gt_index or relevance is given");
  }
  return s;
}

}  // namespace

Dataset load_jsonl(const std::string& path, Schema schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  Dataset ds;
  ds.schema = schema;
  ds.directory = fs::path(path).parent_path().string();
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(path + ": line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(path + ": line " + std::to_string(line) + ": expected an object");
    try {
      LineReader r(j, line);
      if (schema == Schema::caption) {
        ds.captions.push_back(parse_caption(r));
      } else {
        ds.dialogs.push_back(parse_dialog(r));
      }
    } catch (const SchemaError& e) {
      throw SchemaError(path + ": " + e.what());
    }
  }
  return ds;
}

Dataset load_any(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string text;
  while (std::getline(in, text)) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      return load_jsonl(path, j.is_object() && j.contains("question") ? Schema::dialog : Schema::caption);
    } catch (const json::parse_error& e) {
      throw DataError(path + ": line 1: malformed JSON (" + e.what() + ")");
    }
  }
  return load_jsonl(path, Schema::caption);
}

std::string to_json_line(const CaptionSample& s) {
  json j;
  j["id"] = s.id;
  j["visual"] = s.visual;
  j["is_video"] = s.is_video;
  j["caption"] = s.caption;
  return j.dump();
}

std::string to_json_line(const DialogSample& s) {
  json j;
  j["id"] = s.id;
  j["visual"] = s.visual;
  j["is_video"] = s.is_video;
  j["caption"] = s.caption;
  json history = json::array();
  for (const auto& [q, a] : s.history) history.push_back(json::array({q, a}));
  j["history"] = history;
  j["question"] = s.question;
  j["answer"] = s.answer;
  if (!s.candidates.empty()) {
    j["candidates"] = s.candidates;
    if (s.gt_index) j["gt_index"] = *s.gt_index;
    if (!s.relevance.empty()) j["relevance"] = s.relevance;
  }
  return j.dump();
}

std::string build_context(const DialogSample& s, std::size_t token_budget) {
  const std::string current = "question: " + s.question;
  std::size_t used = split_words(current).size();
  std::vector<std::string> rounds;
  for (auto it = s.history.rbegin(); it != s.history.rend(); ++it) {
    std::string r = "question: " + it->first + " answer: " + it->second;
    const std::size_t n = split_words(r).size();
    if (token_budget != 0 && used + n > token_budget) break;
    used += n;
    rounds.push_back(std::move(r));
  }
  std::string out;
  for (auto it = rounds.rbegin(); it != rounds.rend(); ++it) out += *it + " ";
  return out + current;
}

void write_visual(const std::string& path, const num::Tensor& frames) {
  if (frames.rank() != 4) throw ShapeError("visual payload must be [F, C, H, W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write visual payload " + path);
  out << frames.dim(0) << ' ' << frames.dim(1) << ' ' << frames.dim(2) << ' ' << frames.dim(3) << '\n';
  std::vector<float> values(frames.data().begin(), frames.data().end());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw DataError("failed writing visual payload " + path);
}

num::Tensor read_visual(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open visual payload " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::size_t f = 0, c = 0, h = 0, w = 0;
  if (!(hs >> f >> c >> h >> w) || f == 0 || c == 0 || h == 0 || w == 0) {
    throw DataError(path + ": bad payload header '" + header + "' (expected \"F C H W\")");
  }
  const std::size_t n = f * c * h * w;
  std::vector<float> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float)) {
    throw DataError(path + ": payload truncated, expected " + std::to_string(n) + " floats");
  }
  return num::Tensor({f, c, h, w}, std::vector<double>(values.begin(), values.end()));
}

std::vector<std::size_t> sample_frame_indices(std::size_t total, std::size_t count) {
  if (total == 0 || count == 0) throw DataError("frame sampling needs at least one frame");
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::size_t>(
        std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(total) / static_cast<double>(count)));
  }
  return out;
}

num::Tensor load_frames(const std::string& path, std::size_t count) {
  const num::Tensor all = read_visual(path);
  const std::size_t total = all.dim(0);
  if (total == 1 || count == total) return all;
  const std::size_t frame = all.numel() / total;
  std::vector<double> out;
  out.reserve(count * frame);
  for (std::size_t idx : sample_frame_indices(total, count)) {
    out.insert(out.end(), all.data().begin() + idx * frame, all.data().begin() + (idx + 1) * frame);
  }
  return num::Tensor({count, all.dim(1), all.dim(2), all.dim(3)}, std::move(out));
}

}  // namespace xdial::data
