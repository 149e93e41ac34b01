// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xdial/evaluation/embedding.hpp"

namespace xdial::eval {

struct RankedCandidates {
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<double> scores;      // cosine per candidate, original order
  std::size_t gt_index = 0;
  std::vector<double> relevance;   // optional, original order

  std::size_t gt_rank() const;  // 1-based
};

// Sorts by score descending; ties go to the lower index.
RankedCandidates rank_by_scores(std::vector<double> scores, std::size_t gt_index,
                                std::vector<double> relevance = {});

// Embeds the generated answer and every candidate and ranks candidates by
// cosine to the generated answer. Raw embeddings are L2-normalized here.
RankedCandidates rank_candidates(const std::string& generated, const std::vector<std::string>& candidates,
                                 std::size_t gt_index, EmbeddingProvider& provider,
                                 std::vector<double> relevance = {});

struct RetrievalScores {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double mrr = 0.0;
  double mean_rank = 0.0;
  std::optional<double> ndcg;
  std::size_t samples = 0;
};

double recall_at(const RankedCandidates& r, std::size_t k);
double reciprocal_rank(const RankedCandidates& r);
// Linear gain, log2(i + 1) discount over the full list, normalized by the
// ideal ordering. DataError without relevance.
double ndcg(const RankedCandidates& r);

// Means over samples. NDCG is reported only when every sample has relevance.
RetrievalScores retrieval_metrics(const std::vector<RankedCandidates>& ranked);

std::string retrieval_json(const RetrievalScores& s);
std::string retrieval_table(const RetrievalScores& s);

}  // namespace xdial::eval
