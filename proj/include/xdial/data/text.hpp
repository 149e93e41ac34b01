// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace xdial::data {

// Lowercases, splits on whitespace and detaches punctuation into its own word.
std::vector<std::string> split_words(const std::string& text);

// Token <-> id map whose first six entries are the reserved tokens.
class Vocabulary {
 public:
  Vocabulary();  // reserved tokens only
  explicit Vocabulary(const std::vector<std::string>& words);

  // Adds a word if missing and returns its id.
  int add(const std::string& word);
  int id(const std::string& word) const;  // UNK when absent
  const std::string& token(int id) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, in id order.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);
// Joins ordinary tokens with spaces; reserved ids are dropped.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);
// Words as the metrics see them (same splitting as the tokenizer).
std::vector<std::string> metric_tokens(const std::string& text);

// Right-pads every sequence with PAD to the longest length.
std::vector<std::vector<int>> pad_sequences(const std::vector<std::vector<int>>& seqs);

}  // namespace xdial::data
