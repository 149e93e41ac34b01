// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "xdial/data/samples.hpp"

namespace xdial::data {

// Scenes of at most two flat-colored shapes, one in the top-left and one in
// the bottom-right quadrant of a 56x56 canvas. Videos have 8 frames in which
// every shape drifts one pixel per frame in a fixed direction.
inline constexpr std::size_t kSceneSize = 56;
inline constexpr std::size_t kSceneFrames = 8;
inline constexpr std::size_t kShapeSize = 12;

enum class ShapeKind { square, circle, triangle };
enum class Direction { left, right, up, down };
enum class Quadrant { top_left, bottom_right };

struct SceneObject {
  ShapeKind shape = ShapeKind::square;
  std::size_t color = 0;  // index into the palette
  Quadrant quadrant = Quadrant::top_left;
  Direction direction = Direction::left;
  int x = 0;  // top-left corner of the shape box at frame 0, inside the quadrant
  int y = 0;
};

struct Scene {
  bool is_video = false;
  std::vector<SceneObject> objects;  // distinct shapes and colors, one per quadrant
};

const std::vector<std::string>& palette_names();
std::string shape_name(ShapeKind s);
std::string direction_name(Direction d);
std::string quadrant_name(Quadrant q);

Scene random_scene(bool is_video, std::mt19937_64& rng);
num::Tensor render(const Scene& scene);  // [T, 3, 56, 56]

// Facts recovered from pixels alone.
struct ObservedObject {
  ShapeKind shape;
  std::size_t color;
  Quadrant quadrant;
  std::optional<Direction> direction;  // videos only
};
std::vector<ObservedObject> analyze(const num::Tensor& frames);

struct QuestionAnswer {
  std::string question;
  std::string answer;
  std::vector<std::string> paraphrases;
};

std::string describe(const std::vector<ObservedObject>& objects, bool is_video);
std::vector<QuestionAnswer> questions_for(const std::vector<ObservedObject>& objects, bool is_video);
// Re-derives the answer to a templated question from observed facts.
std::optional<std::string> answer_from(const std::string& question,
                                       const std::vector<ObservedObject>& objects, bool is_video);
std::vector<ObservedObject> scene_facts(const Scene& scene);

// Every word the templates can produce, in a fixed order.
Vocabulary synthetic_vocabulary();
// All distinct answer strings the templates can produce.
std::vector<std::string> answer_pool();

enum class CorpusKind { stage1, stage2, stage3_video, stage3_image };
CorpusKind parse_corpus_kind(const std::string& text);  // ConfigError on unknown kinds
std::string corpus_kind_name(CorpusKind kind);

// Writes data.jsonl, vocab.txt and visual/<id>.bin under out_dir. Output is a
// pure function of (seed, n, kind). Every written sample passes the pixel
// verifier. Returns the JSONL path.
std::string synth_corpus(std::uint64_t seed, std::size_t n, CorpusKind kind, const std::string& out_dir);

// Checks caption and answer of a sample against its rendered pixels.
bool verify_sample(const DialogSample& sample, const num::Tensor& frames);
bool verify_sample(const CaptionSample& sample, const num::Tensor& frames);

}  // namespace xdial::data
