// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "xdial/common/errors.hpp"

namespace xdial::data {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1},
                                                         {1, 1, 0}, {0, 1, 1}, {1, 0, 1}}};
constexpr std::array<ShapeKind, 3> kShapes{ShapeKind::square, ShapeKind::circle, ShapeKind::triangle};
constexpr std::array<Direction, 4> kDirections{Direction::left, Direction::right, Direction::up,
                                               Direction::down};
constexpr std::array<Quadrant, 2> kQuadrants{Quadrant::top_left, Quadrant::bottom_right};
constexpr int kQuadrantSize = static_cast<int>(kSceneSize / 2);
constexpr int kShift = static_cast<int>(kSceneFrames) - 1;

bool inside(ShapeKind shape, int r, int c) {
  const double dr = r - 5.5;
  const double dc = c - 5.5;
  switch (shape) {
    case ShapeKind::square: return true;
    case ShapeKind::circle: return dr * dr + dc * dc <= 36.0;
    case ShapeKind::triangle: return std::abs(dc) <= 0.5 * (r + 1);
  }
  return false;
}

std::pair<int, int> velocity(Direction d) {
  switch (d) {
    case Direction::left: return {-1, 0};
    case Direction::right: return {1, 0};
    case Direction::up: return {0, -1};
    case Direction::down: return {0, 1};
  }
  return {0, 0};
}

int pick(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string count_answer(std::size_t n) {
  return n == 1 ? "there is one shape ." : "there are two shapes .";
}

}  // namespace

const std::vector<std::string>& palette_names() {
  static const std::vector<std::string> names{"red", "green", "blue", "yellow", "cyan", "magenta"};
  return names;
}

std::string shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::square: return "square";
    case ShapeKind::circle: return "circle";
    case ShapeKind::triangle: return "triangle";
  }
  return "";
}

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::up: return "up";
    case Direction::down: return "down";
  }
  return "";
}

std::string quadrant_name(Quadrant q) {
  return q == Quadrant::top_left ? "top left" : "bottom right";
}

Scene random_scene(bool is_video, std::mt19937_64& rng) {
  Scene scene;
  scene.is_video = is_video;
  const int count = pick(rng, 1, 2);
  std::vector<ShapeKind> shapes(kShapes.begin(), kShapes.end());
  std::vector<std::size_t> colors{0, 1, 2, 3, 4, 5};
  std::shuffle(shapes.begin(), shapes.end(), rng);
  std::shuffle(colors.begin(), colors.end(), rng);
  std::vector<Quadrant> quads(kQuadrants.begin(), kQuadrants.end());
  std::shuffle(quads.begin(), quads.end(), rng);
  const int room = kQuadrantSize - static_cast<int>(kShapeSize);
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = shapes[static_cast<std::size_t>(i)];
    o.color = colors[static_cast<std::size_t>(i)];
    o.quadrant = quads[static_cast<std::size_t>(i)];
    o.direction = kDirections[static_cast<std::size_t>(pick(rng, 0, 3))];
    o.x = pick(rng, 0, room);
    o.y = pick(rng, 0, room);
    if (is_video) {
      // Keep the whole trajectory inside the quadrant.
      const auto [vx, vy] = velocity(o.direction);
      if (vx < 0) o.x = pick(rng, kShift, room);
      if (vx > 0) o.x = pick(rng, 0, room - kShift);
      if (vy < 0) o.y = pick(rng, kShift, room);
      if (vy > 0) o.y = pick(rng, 0, room - kShift);
    }
    scene.objects.push_back(o);
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.quadrant < b.quadrant; });
  return scene;
}

num::Tensor render(const Scene& scene) {
  const std::size_t t_count = scene.is_video ? kSceneFrames : 1;
  const std::size_t s = kSceneSize;
  std::vector<double> px(t_count * 3 * s * s, 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (const auto& o : scene.objects) {
      const auto [vx, vy] = velocity(o.direction);
      const int step = scene.is_video ? static_cast<int>(t) : 0;
      const int off = o.quadrant == Quadrant::top_left ? 0 : kQuadrantSize;
      const int x0 = off + o.x + vx * step;
      const int y0 = off + o.y + vy * step;
      for (int r = 0; r < static_cast<int>(kShapeSize); ++r) {
        for (int c = 0; c < static_cast<int>(kShapeSize); ++c) {
          if (!inside(o.shape, r, c)) continue;
          const std::size_t y = static_cast<std::size_t>(y0 + r);
          const std::size_t x = static_cast<std::size_t>(x0 + c);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            px[((t * 3 + ch) * s + y) * s + x] = kPalette[o.color][ch];
          }
        }
      }
    }
  }
  return num::Tensor({t_count, 3, s, s}, std::move(px));
}

std::vector<ObservedObject> analyze(const num::Tensor& frames) {
  if (frames.rank() != 4 || frames.dim(1) != 3) throw ShapeError("analyze expects [T, 3, H, W]");
  const std::size_t t_count = frames.dim(0);
  const std::size_t h = frames.dim(2);
  const std::size_t w = frames.dim(3);
  const auto& px = frames.data();
  auto lit = [&](std::size_t t, std::size_t y, std::size_t x) {
    double m = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) m = std::max(m, px[((t * 3 + ch) * h + y) * w + x]);
    return m > 0.5;
  };
  std::vector<ObservedObject> out;
  for (Quadrant q : kQuadrants) {
    const std::size_t y_lo = q == Quadrant::top_left ? 0 : h / 2;
    const std::size_t x_lo = q == Quadrant::top_left ? 0 : w / 2;
    struct Stats {
      std::size_t count = 0;
      double sx = 0, sy = 0;
      std::size_t min_x = SIZE_MAX, max_x = 0, min_y = SIZE_MAX, max_y = 0;
      std::array<double, 3> rgb{};
    };
    auto stats = [&](std::size_t t) {
      Stats s;
      for (std::size_t y = y_lo; y < y_lo + h / 2; ++y) {
        for (std::size_t x = x_lo; x < x_lo + w / 2; ++x) {
          if (!lit(t, y, x)) continue;
          ++s.count;
          s.sx += static_cast<double>(x);
          s.sy += static_cast<double>(y);
          s.min_x = std::min(s.min_x, x);
          s.max_x = std::max(s.max_x, x);
          s.min_y = std::min(s.min_y, y);
          s.max_y = std::max(s.max_y, y);
          for (std::size_t ch = 0; ch < 3; ++ch) s.rgb[ch] += px[((t * 3 + ch) * h + y) * w + x];
        }
      }
      return s;
    };
    const Stats first = stats(0);
    if (first.count == 0) continue;
    ObservedObject o;
    o.quadrant = q;
    const double box = static_cast<double>((first.max_x - first.min_x + 1) * (first.max_y - first.min_y + 1));
    const double fill = static_cast<double>(first.count) / box;
    o.shape = fill > 0.92 ? ShapeKind::square : fill > 0.65 ? ShapeKind::circle : ShapeKind::triangle;
    std::size_t best = 0;
    double best_err = 1e300;
    for (std::size_t c = 0; c < kPalette.size(); ++c) {
      double err = 0.0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double d = first.rgb[ch] / static_cast<double>(first.count) - kPalette[c][ch];
        err += d * d;
      }
      if (err < best_err) {
        best_err = err;
        best = c;
      }
    }
    o.color = best;
    if (t_count > 1) {
      const Stats last = stats(t_count - 1);
      const double dx = last.sx / static_cast<double>(last.count) - first.sx / static_cast<double>(first.count);
      const double dy = last.sy / static_cast<double>(last.count) - first.sy / static_cast<double>(first.count);
      if (std::abs(dx) >= std::abs(dy)) {
        o.direction = dx < 0 ? Direction::left : Direction::right;
      } else {
        o.direction = dy < 0 ? Direction::up : Direction::down;
      }
    }
    out.push_back(o);
  }
  return out;
}

std::vector<ObservedObject> scene_facts(const Scene& scene) {
  std::vector<ObservedObject> out;
  for (const auto& o : scene.objects) {
    ObservedObject f{o.shape, o.color, o.quadrant, std::nullopt};
    if (scene.is_video) f.direction = o.direction;
    out.push_back(f);
  }
  return out;
}

std::string describe(const std::vector<ObservedObject>& objects, bool is_video) {
  std::string out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (i > 0) out += " and ";
    out += "a " + palette_names()[o.color] + " " + shape_name(o.shape);
    if (is_video && o.direction) {
      out += " moves " + direction_name(*o.direction);
    } else {
      out += " in the " + quadrant_name(o.quadrant);
    }
  }
  return out + " .";
}

std::vector<QuestionAnswer> questions_for(const std::vector<ObservedObject>& objects, bool is_video) {
  std::vector<QuestionAnswer> out;
  for (const auto& o : objects) {
    const std::string shape = shape_name(o.shape);
    const std::string color = palette_names()[o.color];
    const std::string quad = quadrant_name(o.quadrant);
    out.push_back({"what color is the " + shape + " ?", "the " + shape + " is " + color + " .",
                   {"it is " + color + " .", color + " ."}});
    out.push_back({"what shape is the " + color + " object ?", "it is a " + shape + " .",
                   {"the " + color + " object is a " + shape + " .", "a " + shape + " ."}});
    out.push_back({"where is the " + shape + " ?", "the " + shape + " is in the " + quad + " .",
                   {"it is in the " + quad + " .", quad + " ."}});
    if (is_video && o.direction) {
      const std::string dir = direction_name(*o.direction);
      out.push_back({"which way does the " + shape + " move ?", "the " + shape + " moves " + dir + " .",
                     {"it moves " + dir + " .", dir + " ."}});
    }
  }
  const std::size_t n = objects.size();
  out.push_back({"how many shapes are there ?", count_answer(n),
                 {n == 1 ? "one ." : "two .", n == 1 ? "i see one shape ." : "i see two shapes ."}});
  for (ShapeKind s : kShapes) {
    const bool present = std::any_of(objects.begin(), objects.end(),
                                     [&](const ObservedObject& o) { return o.shape == s; });
    const std::string name = shape_name(s);
    out.push_back({"is there a " + name + " ?",
                   present ? "yes , there is a " + name + " ." : "no , there is no " + name + " .",
                   {present ? "yes ." : "no ."}});
  }
  return out;
}

std::optional<std::string> answer_from(const std::string& question,
                                       const std::vector<ObservedObject>& objects, bool is_video) {
  for (const auto& qa : questions_for(objects, is_video)) {
    if (qa.question == question) return qa.answer;
  }
  return std::nullopt;
}

Vocabulary synthetic_vocabulary() {
  static const std::vector<std::string> words{
      "a",      "the",    "is",       "it",     "and",    "in",     "there",   "are",    "what",
      "color",  "shape",  "object",   "where",  "which",  "way",    "does",    "move",   "moves",
      "how",    "many",   "shapes",   "one",    "two",    "i",      "see",     "yes",    "no",
      "top",    "bottom", "left",     "right",  "up",     "down",   "square",  "circle", "triangle",
      "red",    "green",  "blue",     "yellow", "cyan",   "magenta", "question", "answer", ":",
      ",",      ".",      "?"};
  return Vocabulary(words);
}

std::vector<std::string> answer_pool() {
  std::set<std::string> pool;
  auto add = [&](const QuestionAnswer& qa) {
    pool.insert(qa.answer);
    pool.insert(qa.paraphrases.begin(), qa.paraphrases.end());
  };
  for (ShapeKind s : kShapes) {
    for (std::size_t c = 0; c < kPalette.size(); ++c) {
      for (Quadrant q : kQuadrants) {
        for (Direction d : kDirections) {
          for (const auto& qa : questions_for({{s, c, q, d}}, true)) add(qa);
          pool.insert("the " + palette_names()[c] + " " + shape_name(s) + " moves " + direction_name(d) + " .");
        }
      }
    }
  }
  for (const auto& qa : questions_for({{ShapeKind::square, 0, Quadrant::top_left, std::nullopt},
                                       {ShapeKind::circle, 1, Quadrant::bottom_right, std::nullopt}},
                                      false)) {
    add(qa);
  }
  return {pool.begin(), pool.end()};
}

CorpusKind parse_corpus_kind(const std::string& text) {
  if (text == "stage1") return CorpusKind::stage1;
  if (text == "stage2") return CorpusKind::stage2;
  if (text == "stage3-video") return CorpusKind::stage3_video;
  if (text == "stage3-image") return CorpusKind::stage3_image;
  throw ConfigError("unknown corpus kind '" + text +
                    "' (expected stage1, stage2, stage3-video or stage3-image)");
}

std::string corpus_kind_name(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::stage1: return "stage1";
    case CorpusKind::stage2: return "stage2";
    case CorpusKind::stage3_video: return "stage3-video";
    case CorpusKind::stage3_image: return "stage3-image";
  }
  return "";
}

bool verify_sample(const CaptionSample& sample, const num::Tensor& frames) {
  return describe(analyze(frames), sample.is_video) == sample.caption;
}

bool verify_sample(const DialogSample& sample, const num::Tensor& frames) {
  const auto facts = analyze(frames);
  if (describe(facts, sample.is_video) != sample.caption) return false;
  for (const auto& [q, a] : sample.history) {
    if (answer_from(q, facts, sample.is_video) != a) return false;
  }
  return answer_from(sample.question, facts, sample.is_video) == sample.answer;
}

std::string synth_corpus(std::uint64_t seed, std::size_t n, CorpusKind kind, const std::string& out_dir) {
  if (n == 0) throw ConfigError("synthetic corpus needs n >= 1");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "visual", ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
  std::mt19937_64 rng(seed);
  const auto pool = answer_pool();
  const std::string jsonl = (fs::path(out_dir) / "data.jsonl").string();
  std::ofstream out(jsonl, std::ios::binary);
  if (!out) throw DataError("cannot write " + jsonl);
  for (std::size_t i = 0; i < n; ++i) {
    char id_buf[64];
    std::snprintf(id_buf, sizeof(id_buf), "%s-%05zu", corpus_kind_name(kind).c_str(), i);
    const std::string id = id_buf;
    const bool video = kind == CorpusKind::stage1 ? i % 2 == 0 : kind != CorpusKind::stage3_image;
    const Scene scene = random_scene(video, rng);
    const num::Tensor frames = render(scene);
    const std::string rel = "visual/" + id + ".bin";
    write_visual((fs::path(out_dir) / rel).string(), frames);
    const auto facts = scene_facts(scene);
    if (kind == CorpusKind::stage1) {
      CaptionSample s{id, rel, video, describe(facts, video)};
      if (!verify_sample(s, frames)) throw DataError("synthetic sample " + id + " failed verification");
      out << to_json_line(s) << '\n';
      continue;
    }
    auto qas = questions_for(facts, video);
    std::shuffle(qas.begin(), qas.end(), rng);
    const std::size_t rounds = static_cast<std::size_t>(pick(rng, 0, 2));
    DialogSample s;
    s.id = id;
    s.visual = rel;
    s.is_video = video;
    s.caption = describe(facts, video);
    for (std::size_t r = 0; r < rounds; ++r) s.history.emplace_back(qas[r + 1].question, qas[r + 1].answer);
    s.question = qas[0].question;
    s.answer = qas[0].answer;
    if (kind != CorpusKind::stage2) {
      std::vector<std::string> cands{s.answer};
      std::vector<double> rel_scores{1.0};
      for (const auto& p : qas[0].paraphrases) {
        cands.push_back(p);
        rel_scores.push_back(0.5);
      }
      std::vector<std::string> others;
      for (const auto& a : pool) {
        if (std::find(cands.begin(), cands.end(), a) == cands.end()) others.push_back(a);
      }
      std::shuffle(others.begin(), others.end(), rng);
      for (std::size_t k = 0; cands.size() < kNumCandidates; ++k) {
        cands.push_back(others.at(k));
        rel_scores.push_back(0.0);
      }
      std::vector<std::size_t> order(kNumCandidates);
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 0; k < order.size(); ++k) {
        s.candidates.push_back(cands[order[k]]);
        s.relevance.push_back(rel_scores[order[k]]);
        if (order[k] == 0) s.gt_index = static_cast<int>(k);
      }
    }
    if (!verify_sample(s, frames)) throw DataError("synthetic sample " + id + " failed verification");
    out << to_json_line(s) << '\n';
  }
  synthetic_vocabulary().save((fs::path(out_dir) / "vocab.txt").string());
  return jsonl;
}

}  // namespace xdial::data
