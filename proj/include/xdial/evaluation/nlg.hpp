// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

namespace xdial::eval {

using Tokens = std::vector<std::string>;

// Sentence-level BLEU-n: geometric mean of clipped n-gram precisions 1..n
// times the brevity penalty against the closest reference length. No
// smoothing, so any zero precision gives 0. Empty candidates score 0.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int n);

// Corpus BLEU-n: clipped counts and lengths are summed over the corpus before
// the precisions and the brevity penalty are formed.
double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                   int n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
inline constexpr double kRougeBeta2 = 1.2;
// LCS F-measure (1+b2)PR/(R+b2 P). With several references the best precision
// and the best recall are combined.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta2 = kRougeBeta2);
inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
  return rouge_l(candidate, std::vector<Tokens>{reference});
}

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};
// Exact-match unigram alignment with the most matches, and among those the
// fewest chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);
// F_mean = 10PR/(R+9P), penalty 0.5 (chunks/matches)^3. Best over references.
double meteor_exact(const Tokens& candidate, const std::vector<Tokens>& references);
inline double meteor_exact(const Tokens& candidate, const Tokens& reference) {
  return meteor_exact(candidate, std::vector<Tokens>{reference});
}

// CIDEr over a corpus: for n = 1..4, tf-idf vectors with idf = log(N / df)
// (N = number of samples, df counted once per sample's reference set), cosine
// to each reference averaged over references; the four orders are averaged
// and scaled by 10. Returns the corpus mean; per-sample scores go to `each`.
double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
             std::vector<double>* each = nullptr);

struct NlgScores {
  std::array<double, 4> bleu{};  // B-1..B-4
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t samples = 0;
};

// Corpus B-n, mean METEOR, mean ROUGE-L and CIDEr over raw strings, tokenized
// like the model's text.
NlgScores score_corpus(const std::vector<std::string>& predictions,
                       const std::vector<std::vector<std::string>>& references);

// Reads {"id", "generated"} and {"id", "references"} JSONL files and pairs them
// by id. Every prediction needs a reference entry. Raises DataError on empty or
// malformed input.
struct PairedText {
  std::vector<std::string> ids;
  std::vector<std::string> predictions;
  std::vector<std::vector<std::string>> references;
};
PairedText load_prediction_pairs(const std::string& pred_path, const std::string& ref_path);

std::string nlg_json(const NlgScores& s);
std::string nlg_table(const NlgScores& s);

}  // namespace xdial::eval
