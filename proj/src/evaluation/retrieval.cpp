// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/evaluation/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "json.hpp"
#include "xdial/common/errors.hpp"

namespace xdial::eval {

std::size_t RankedCandidates::gt_rank() const {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == gt_index) return i + 1;
  }
  throw DataError("ground-truth index " + std::to_string(gt_index) + " not among ranked candidates");
}

RankedCandidates rank_by_scores(std::vector<double> scores, std::size_t gt_index, std::vector<double> relevance) {
  if (scores.empty()) throw DataError("nothing to rank");
  if (gt_index >= scores.size()) throw DataError("gt_index out of range");
  if (!relevance.empty() && relevance.size() != scores.size()) {
    throw DataError("relevance needs one value per candidate");
  }
  RankedCandidates r;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  r.scores = std::move(scores);
  r.gt_index = gt_index;
  r.relevance = std::move(relevance);
  return r;
}

RankedCandidates rank_candidates(const std::string& generated, const std::vector<std::string>& candidates,
                                 std::size_t gt_index, EmbeddingProvider& provider, std::vector<double> relevance) {
  std::vector<std::string> texts{generated};
  texts.insert(texts.end(), candidates.begin(), candidates.end());
  const auto emb = provider.embed(texts);
  if (emb.size() != texts.size()) {
    throw ProviderError(provider.name() + " returned " + std::to_string(emb.size()) + " embeddings for " +
                        std::to_string(texts.size()) + " texts");
  }
  const Embedding g = l2_normalized(emb[0]);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 1; i < emb.size(); ++i) scores.push_back(cosine(g, l2_normalized(emb[i])));
  return rank_by_scores(std::move(scores), gt_index, std::move(relevance));
}

double recall_at(const RankedCandidates& r, std::size_t k) { return r.gt_rank() <= k ? 1.0 : 0.0; }

double reciprocal_rank(const RankedCandidates& r) { return 1.0 / static_cast<double>(r.gt_rank()); }

double ndcg(const RankedCandidates& r) {
  if (r.relevance.empty()) throw DataError("NDCG requested for a sample without relevance scores");
  double dcg = 0.0;
  for (std::size_t i = 0; i < r.order.size(); ++i) {
    dcg += r.relevance[r.order[i]] / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<double> ideal = r.relevance;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size(); ++i) idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

RetrievalScores retrieval_metrics(const std::vector<RankedCandidates>& ranked) {
  if (ranked.empty()) throw DataError("no ranked samples to score");
  RetrievalScores s;
  s.samples = ranked.size();
  bool all_rel = true;
  double nd = 0.0;
  for (const auto& r : ranked) {
    s.r1 += recall_at(r, 1);
    s.r5 += recall_at(r, 5);
    s.r10 += recall_at(r, 10);
    s.mrr += reciprocal_rank(r);
    s.mean_rank += static_cast<double>(r.gt_rank());
    if (r.relevance.empty()) {
      all_rel = false;
    } else {
      nd += ndcg(r);
    }
  }
  const double n = static_cast<double>(ranked.size());
  s.r1 /= n;
  s.r5 /= n;
  s.r10 /= n;
  s.mrr /= n;
  s.mean_rank /= n;
  if (all_rel) s.ndcg = nd / n;
  return s;
}

std::string retrieval_json(const RetrievalScores& s) {
  nlohmann::ordered_json j;
  j["samples"] = s.samples;
  j["r@1"] = s.r1;
  j["r@5"] = s.r5;
  j["r@10"] = s.r10;
  j["mrr"] = s.mrr;
  j["mean_rank"] = s.mean_rank;
  if (s.ndcg) j["ndcg"] = *s.ndcg;
  return j.dump(2);
}

std::string retrieval_table(const RetrievalScores& s) {
  std::string out = fmt::format("{:<14}{:>10}\n", "metric", "score");
  out += fmt::format("{:<14}{:>10.4f}\n", "R@1", s.r1);
  out += fmt::format("{:<14}{:>10.4f}\n", "R@5", s.r5);
  out += fmt::format("{:<14}{:>10.4f}\n", "R@10", s.r10);
  out += fmt::format("{:<14}{:>10.4f}\n", "MRR", s.mrr);
  out += fmt::format("{:<14}{:>10.2f}\n", "mean rank", s.mean_rank);
  if (s.ndcg) out += fmt::format("{:<14}{:>10.4f}\n", "NDCG", *s.ndcg);
  out += fmt::format("{:<14}{:>10}\n", "samples", s.samples);
  return out;
}

}  // namespace xdial::eval
