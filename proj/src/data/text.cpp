// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/data/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "xdial/common/errors.hpp"
#include "xdial/common/tokens.hpp"

namespace xdial::data {

namespace {

const std::vector<std::string> kReserved{"<pad>", "<unk>", "<bos>", "<eos>", "<mask>", "<cls>"};

}  // namespace

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'' && c != '-') {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto& w : kReserved) add(w);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(word);
  index_.emplace(word, id);
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary to " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary " + path);
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n < kReserved.size()) {
      if (line != kReserved[n]) {
        throw DataError(path + ": line " + std::to_string(n + 1) + " must be reserved token " +
                        kReserved[n]);
      }
    } else {
      if (line.empty() || v.contains(line)) {
        throw DataError(path + ": line " + std::to_string(n + 1) + " is empty or duplicated");
      }
      v.add(line);
    }
    ++n;
  }
  return v;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < kFirstOrdinary && id != kUnk) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

std::vector<std::string> metric_tokens(const std::string& text) { return split_words(text); }

std::vector<std::vector<int>> pad_sequences(const std::vector<std::vector<int>>& seqs) {
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  auto out = seqs;
  for (auto& s : out) s.resize(longest, kPad);
  return out;
}

}  // namespace xdial::data
