// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/evaluation/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"
#include "xdial/common/errors.hpp"

namespace xdial::eval {

Embedding l2_normalized(Embedding v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s == 0.0) return v;
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine of vectors with " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                     " entries");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<Embedding> BuiltinEmbedder::embed(const std::vector<std::string>& texts) {
  num::NoGradGuard no_grad;
  const std::size_t d = lm_.config().dim;
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<int> ids = data::tokenize(t, vocab_);
    if (ids.size() > lm_.config().max_source_len) ids.resize(lm_.config().max_source_len);
    Embedding e(d, 0.0);
    if (!ids.empty()) {
      const num::Tensor states = lm_.encode_tokens(ids);
      const auto& v = states.data();
      const std::size_t n = states.dim(0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) e[k] += v[i * d + k];
      }
      for (double& x : e) x /= static_cast<double>(n);
    }
    out.push_back(l2_normalized(std::move(e)));
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteOptions options) : options_(std::move(options)) {
  const auto scheme = options_.url.find("://");
  if (scheme == std::string::npos) throw ConfigError("embedder URL needs a scheme: '" + options_.url + "'");
  const std::string proto = options_.url.substr(0, scheme);
  if (proto != "http" && proto != "https") throw ConfigError("unsupported embedder scheme '" + proto + "'");
  const auto slash = options_.url.find('/', scheme + 3);
  origin_ = options_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "" : options_.url.substr(slash);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  const std::string suffix = "/embed";
  if (path_.size() < suffix.size() || path_.compare(path_.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path_ += suffix;
  }
  if (options_.batch_size == 0 || options_.max_in_flight == 0) {
    throw ConfigError("embedder batch size and in-flight cap must be >= 1");
  }
  if (options_.retries < 0) throw ConfigError("embedder retries must be >= 0");
}

std::vector<Embedding> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts,
                                                   std::size_t batch_index) const {
  using json = nlohmann::json;
  const std::string body = json{{"texts", texts}}.dump();
  std::string last_error;
  auto delay = options_.backoff;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("embedding batch {} attempt {} failed ({}); retrying in {} ms", batch_index, attempt, last_error,
                   delay.count());
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const json j = json::parse(res->body);
      const auto& rows = j.at("embeddings");
      if (!rows.is_array() || rows.size() != texts.size()) {
        throw std::runtime_error("expected " + std::to_string(texts.size()) + " embeddings");
      }
      std::vector<Embedding> out;
      for (const auto& row : rows) out.push_back(row.get<Embedding>());
      const std::size_t dim = j.contains("dim") ? j.at("dim").get<std::size_t>() : out[0].size();
      for (const auto& e : out) {
        if (e.size() != dim || dim == 0) throw std::runtime_error("inconsistent embedding width");
      }
      return out;
    } catch (const std::exception& e) {
      last_error = std::string("bad response: ") + e.what();
    }
  }
  throw ProviderError("embedding batch " + std::to_string(batch_index) + " (" + std::to_string(texts.size()) +
                      " texts) failed after " + std::to_string(options_.retries) + " retries: " + last_error);
}

std::vector<Embedding> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> batches;
  for (std::size_t s = 0; s < texts.size(); s += options_.batch_size) {
    batches.emplace_back(texts.begin() + static_cast<std::ptrdiff_t>(s),
                         texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), s + options_.batch_size)));
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t wave = 0; wave < batches.size(); wave += options_.max_in_flight) {
    std::vector<std::future<std::vector<Embedding>>> pending;
    const std::size_t end = std::min(batches.size(), wave + options_.max_in_flight);
    for (std::size_t b = wave; b < end; ++b) {
      pending.push_back(std::async(std::launch::async, [this, &batches, b] { return embed_batch(batches[b], b); }));
    }
    // get() in order so the first failing batch is the one reported.
    std::vector<std::vector<Embedding>> results;
    std::exception_ptr error;
    for (auto& f : pending) {
      try {
        results.push_back(f.get());
      } catch (...) {
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    for (auto& r : results) {
      for (auto& e : r) out.push_back(std::move(e));
    }
  }
  for (const auto& e : out) {
    if (e.size() != out[0].size()) throw ProviderError("embedding provider returned mixed widths across batches");
  }
  return out;
}

}  // namespace xdial::eval
