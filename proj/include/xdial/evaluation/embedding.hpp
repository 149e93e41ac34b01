// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "xdial/data/text.hpp"
#include "xdial/generator/toy_lm.hpp"

namespace xdial::eval {

using Embedding = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  // One vector per text, all the same length. ProviderError on failure.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

// Scales to unit length; zero vectors stay zero.
Embedding l2_normalized(Embedding v);
double cosine(const Embedding& a, const Embedding& b);

// Mean-pooled encoder states of the toy LM, truncated to its source length.
// Texts with no tokens embed to the zero vector.
class BuiltinEmbedder : public EmbeddingProvider {
 public:
  BuiltinEmbedder(const generator::ToyLM& lm, const data::Vocabulary& vocab) : lm_(lm), vocab_(vocab) {}
  std::string name() const override { return "builtin"; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

 private:
  const generator::ToyLM& lm_;
  const data::Vocabulary& vocab_;
};

struct RemoteOptions {
  std::string url;  // base URL; "/embed" is appended unless already present
  std::size_t batch_size = 32;
  std::size_t max_in_flight = 4;
  int retries = 3;
  std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  std::chrono::milliseconds timeout{30000};
};

// POST {"texts": [...]} -> {"embeddings": [[...], ...], "dim": d}.
class RemoteEmbedder : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteOptions options);
  std::string name() const override { return "remote:" + options_.url; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  const RemoteOptions& options() const { return options_; }

 private:
  std::vector<Embedding> embed_batch(const std::vector<std::string>& texts, std::size_t batch_index) const;

  RemoteOptions options_;
  std::string origin_;
  std::string path_;
};

}  // namespace xdial::eval
