// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/evaluation/nlg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "xdial/common/errors.hpp"
#include "xdial/data/text.hpp"

namespace xdial::eval {

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                                                                t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

struct BleuStats {
  std::array<double, 4> matched{};
  std::array<double, 4> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

void check_order(int n) {
  if (n < 1 || n > 4) throw ConfigError("BLEU order must be in 1..4, got " + std::to_string(n));
}

BleuStats bleu_stats(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
  if (refs.empty()) throw DataError("BLEU needs at least one reference");
  BleuStats s;
  s.cand_len = static_cast<double>(cand.size());
  // Closest reference length, shorter wins ties.
  std::size_t best = refs[0].size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) {
      return len > cand.size() ? len - cand.size() : cand.size() - len;
    };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  s.ref_len = static_cast<double>(best);
  for (int k = 1; k <= n; ++k) {
    const auto c = ngrams(cand, static_cast<std::size_t>(k));
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, cnt] : ngrams(r, static_cast<std::size_t>(k))) max_ref[g] = std::max(max_ref[g], cnt);
    }
    for (const auto& [g, cnt] : c) {
      auto it = max_ref.find(g);
      s.matched[static_cast<std::size_t>(k - 1)] += static_cast<double>(std::min(cnt, it == max_ref.end() ? 0 : it->second));
      s.total[static_cast<std::size_t>(k - 1)] += static_cast<double>(cnt);
    }
  }
  return s;
}

double combine(const BleuStats& s, int n) {
  if (s.cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (s.total[uk] == 0.0 || s.matched[uk] == 0.0) return 0.0;
    log_sum += std::log(s.matched[uk] / s.total[uk]);
  }
  const double bp = s.cand_len < s.ref_len ? std::exp(1.0 - s.ref_len / s.cand_len) : 1.0;
  return bp * std::exp(log_sum / n);
}

// Branch and bound over exact-match alignments.
class MeteorSearch {
 public:
  MeteorSearch(const Tokens& c, const Tokens& r) : c_(c), r_(r), used_(r.size(), false) {
    for (std::size_t j = 0; j < r.size(); ++j) positions_[r[j]].push_back(j);
    std::unordered_map<std::string, std::size_t> cand_count;
    for (const auto& w : c) ++cand_count[w];
    for (const auto& [w, pos] : positions_) {
      auto it = cand_count.find(w);
      const std::size_t m = it == cand_count.end() ? 0 : std::min(it->second, pos.size());
      target_ += m;
      available_[w] = m;
    }
    remaining_.assign(c.size() + 1, {});
    for (std::size_t i = c.size(); i-- > 0;) {
      remaining_[i] = remaining_[i + 1];
      ++remaining_[i][c[i]];
    }
  }

  MeteorAlignment run() {
    if (target_ == 0) return {};
    dfs(0, 0, 0, std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max());
    return {target_, best_};
  }

 private:
  void dfs(std::size_t i, std::size_t matched, std::size_t chunks, std::size_t last_i, std::size_t last_j) {
    if (chunks >= best_ || (++nodes_ > kNodeBudget && best_ != kUnset)) return;
    if (matched == target_) {
      best_ = chunks;
      return;
    }
    if (i == c_.size()) return;
    const std::string& w = c_[i];
    auto avail = available_.find(w);
    const bool can_match = avail != available_.end() && avail->second > 0;
    if (can_match) {
      const auto& pos = positions_.at(w);
      // Continuing the current chunk first finds good bounds early.
      std::vector<std::size_t> order;
      if (last_i != std::numeric_limits<std::size_t>::max() && last_i + 1 == i && last_j + 1 < r_.size() &&
          r_[last_j + 1] == w && !used_[last_j + 1]) {
        order.push_back(last_j + 1);
      }
      for (std::size_t j : pos) {
        if (!used_[j] && (order.empty() || j != order[0])) order.push_back(j);
      }
      for (std::size_t j : order) {
        const bool extends = last_i != std::numeric_limits<std::size_t>::max() && last_i + 1 == i && last_j + 1 == j;
        used_[j] = true;
        --avail->second;
        dfs(i + 1, matched + 1, chunks + (extends ? 0 : 1), i, j);
        ++avail->second;
        used_[j] = false;
      }
    }
    // Skipping is allowed only while later copies can still fill the quota.
    const std::size_t later = remaining_[i + 1].count(w) ? remaining_[i + 1].at(w) : 0;
    if (!can_match || later >= avail->second) dfs(i + 1, matched, chunks, last_i, last_j);
  }

  static constexpr std::size_t kNodeBudget = 200000;
  static constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  const Tokens& c_;
  const Tokens& r_;
  std::vector<bool> used_;
  std::unordered_map<std::string, std::vector<std::size_t>> positions_;
  std::unordered_map<std::string, std::size_t> available_;
  std::vector<std::unordered_map<std::string, std::size_t>> remaining_;
  std::size_t target_ = 0;
  std::size_t best_ = kUnset;
  std::size_t nodes_ = 0;
};

double norm(const std::map<Tokens, double>& v) {
  double s = 0.0;
  for (const auto& [g, x] : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  check_order(n);
  return combine(bleu_stats(candidate, references, n), n);
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                   int n) {
  check_order(n);
  if (candidates.size() != references.size()) throw DataError("BLEU needs one reference set per candidate");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const BleuStats s = bleu_stats(candidates[i], references[i], n);
    for (std::size_t k = 0; k < 4; ++k) {
      total.matched[k] += s.matched[k];
      total.total[k] += s.total[k];
    }
    total.cand_len += s.cand_len;
    total.ref_len += s.ref_len;
  }
  return combine(total, n);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta2) {
  if (references.empty()) throw DataError("ROUGE-L needs at least one reference");
  if (candidate.empty()) return 0.0;
  double p = 0.0, r = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const double l = static_cast<double>(lcs_length(candidate, ref));
    p = std::max(p, l / static_cast<double>(candidate.size()));
    r = std::max(r, l / static_cast<double>(ref.size()));
  }
  if (p == 0.0 || r == 0.0) return 0.0;
  return (1.0 + beta2) * p * r / (r + beta2 * p);
}

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return MeteorSearch(candidate, reference).run();
}

double meteor_exact(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw DataError("METEOR needs at least one reference");
  double best = 0.0;
  for (const auto& ref : references) {
    const MeteorAlignment a = meteor_align(candidate, ref);
    if (a.matches == 0) continue;
    const double m = static_cast<double>(a.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
    best = std::max(best, f_mean * (1.0 - penalty));
  }
  return best;
}

double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
             std::vector<double>* each) {
  if (candidates.size() != references.size()) throw DataError("CIDEr needs one reference set per candidate");
  if (candidates.empty()) throw DataError("CIDEr needs a non-empty corpus");
  const double n_docs = static_cast<double>(candidates.size());
  if (candidates.size() == 1) spdlog::warn("CIDEr on a single-sample corpus: every idf is zero");
  std::array<std::map<Tokens, double>, 4> df;
  for (const auto& refs : references) {
    for (std::size_t k = 0; k < 4; ++k) {
      std::set<Tokens> seen;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngrams(r, k + 1)) seen.insert(g);
      }
      for (const auto& g : seen) df[k][g] += 1.0;
    }
  }
  auto tfidf = [&](const Tokens& t, std::size_t k) {
    std::map<Tokens, double> v;
    for (const auto& [g, c] : ngrams(t, k + 1)) {
      auto it = df[k].find(g);
      const double d = std::max(1.0, it == df[k].end() ? 0.0 : it->second);
      v[g] = static_cast<double>(c) * std::log(n_docs / d);
    }
    return v;
  };
  double total = 0.0;
  if (each) each->clear();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto vc = tfidf(candidates[i], k);
      const double nc = norm(vc);
      double acc = 0.0;
      for (const auto& r : references[i]) {
        const auto vr = tfidf(r, k);
        const double nr = norm(vr);
        if (nc == 0.0 || nr == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) dot += x * it->second;
        }
        acc += dot / (nc * nr);
      }
      score += references[i].empty() ? 0.0 : acc / static_cast<double>(references[i].size());
    }
    score = 10.0 * score / 4.0;
    if (each) each->push_back(score);
    total += score;
  }
  return total / n_docs;
}

NlgScores score_corpus(const std::vector<std::string>& predictions,
                       const std::vector<std::vector<std::string>>& references) {
  if (predictions.empty()) throw DataError("no predictions to score");
  if (predictions.size() != references.size()) throw DataError("one reference set per prediction is required");
  std::vector<Tokens> cand;
  std::vector<std::vector<Tokens>> refs;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    cand.push_back(data::metric_tokens(predictions[i]));
    if (references[i].empty()) throw DataError("prediction " + std::to_string(i) + " has no references");
    std::vector<Tokens> r;
    for (const auto& s : references[i]) r.push_back(data::metric_tokens(s));
    refs.push_back(std::move(r));
  }
  NlgScores out;
  out.samples = cand.size();
  for (int n = 1; n <= 4; ++n) out.bleu[static_cast<std::size_t>(n - 1)] = corpus_bleu(cand, refs, n);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    out.meteor += meteor_exact(cand[i], refs[i]);
    out.rouge_l += rouge_l(cand[i], refs[i]);
  }
  out.meteor /= static_cast<double>(cand.size());
  out.rouge_l /= static_cast<double>(cand.size());
  out.cider = cider(cand, refs);
  return out;
}

PairedText load_prediction_pairs(const std::string& pred_path, const std::string& ref_path) {
  using json = nlohmann::json;
  auto read = [](const std::string& path, const std::string& field) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::pair<std::string, json>> rows;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        throw DataError(path + ": line " + std::to_string(n) + ": malformed JSON");
      }
      if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains(field)) {
        throw SchemaError(path + ": line " + std::to_string(n) + ": needs string 'id' and '" + field + "'");
      }
      rows.emplace_back(j["id"].get<std::string>(), j[field]);
    }
    return rows;
  };
  const auto preds = read(pred_path, "generated");
  if (preds.empty()) throw DataError(pred_path + ": no predictions");
  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& [id, v] : read(ref_path, "references")) {
    if (!v.is_array() || v.empty()) throw SchemaError(ref_path + ": '" + id + "' needs a non-empty references list");
    std::vector<std::string> r;
    for (const auto& s : v) {
      if (!s.is_string()) throw SchemaError(ref_path + ": '" + id + "' references must be strings");
      r.push_back(s.get<std::string>());
    }
    refs[id] = std::move(r);
  }
  PairedText out;
  for (const auto& [id, v] : preds) {
    if (!v.is_string()) throw SchemaError(pred_path + ": '" + id + "' generated must be a string");
    auto it = refs.find(id);
    if (it == refs.end()) throw DataError(ref_path + ": no references for id '" + id + "'");
    out.ids.push_back(id);
    out.predictions.push_back(v.get<std::string>());
    out.references.push_back(it->second);
  }
  return out;
}

std::string nlg_json(const NlgScores& s) {
  nlohmann::ordered_json j;
  j["samples"] = s.samples;
  for (std::size_t n = 0; n < 4; ++n) j["bleu_" + std::to_string(n + 1)] = s.bleu[n];
  j["meteor_exact"] = s.meteor;
  j["rouge_l"] = s.rouge_l;
  j["cider"] = s.cider;
  return j.dump(2);
}

std::string nlg_table(const NlgScores& s) {
  std::string out = fmt::format("{:<14}{:>10}\n", "metric", "score");
  for (std::size_t n = 0; n < 4; ++n) out += fmt::format("{:<14}{:>10.4f}\n", fmt::format("B-{}", n + 1), s.bleu[n]);
  out += fmt::format("{:<14}{:>10.4f}\n", "METEOR-exact", s.meteor);
  out += fmt::format("{:<14}{:>10.4f}\n", "ROUGE-L", s.rouge_l);
  out += fmt::format("{:<14}{:>10.4f}\n", "CIDEr", s.cider);
  out += fmt::format("{:<14}{:>10}\n", "samples", s.samples);
  return out;
}

}  // namespace xdial::eval
