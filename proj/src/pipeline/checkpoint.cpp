// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#include "xdial/pipeline/checkpoint.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "xdial/common/errors.hpp"
#include "xdial/pipeline/model.hpp"

namespace xdial::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + p.string());
}

void append_floats(std::string& blob, std::span<const double> values) {
  const std::size_t at = blob.size();
  blob.resize(at + values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(blob.data() + at + i * sizeof(float), &f, sizeof(float));
  }
}

void read_floats(const std::string& blob, std::size_t offset, std::span<double> out, const std::string& what) {
  if (offset + out.size() * sizeof(float) > blob.size()) throw DataError(what + " is truncated");
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, blob.data() + offset + i * sizeof(float), sizeof(float));
    out[i] = static_cast<double>(f);
  }
}

}  // namespace

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

DirectoryLock::DirectoryLock(const std::string& dir) : path_(fs::path(dir).lexically_normal().string() + ".lock") {
  const fs::path parent = fs::path(path_).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw DataError("checkpoint " + dir + " is locked by another writer (" + path_ +
                    " exists; remove it if no run is active)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string checkpoint_config_path(const std::string& dir) { return (fs::path(dir) / "config.json").string(); }
std::string checkpoint_vocab_path(const std::string& dir) { return (fs::path(dir) / "vocab.txt").string(); }

void save_checkpoint(const std::string& dir, const Model& model, const num::AdamW* optimizer,
                     const TrainState& state) {
  DirectoryLock lock(dir);
  const fs::path final_dir = fs::path(dir).lexically_normal();
  const fs::path tmp = final_dir.string() + ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);

  std::string params;
  json table = json::array();
  for (const auto& p : model.store.params()) {
    table.push_back({{"name", p.name},
                     {"shape", p.tensor.shape()},
                     {"dtype", "f32"},
                     {"offset", params.size()},
                     {"frozen", p.frozen}});
    append_floats(params, p.tensor.data());
  }
  std::string optim;
  json moments = json::array();
  if (optimizer) {
    for (const auto& p : model.store.params()) {
      auto it = optimizer->moments().find(p.name);
      if (it == optimizer->moments().end()) continue;
      moments.push_back({{"name", p.name}, {"offset", optim.size()}});
      append_floats(optim, it->second.m);
      append_floats(optim, it->second.v);
    }
  }
  write_file(tmp / "params.bin", params);
  if (optimizer) write_file(tmp / "optim.bin", optim);
  write_file(tmp / "config.json", config_to_json(model.config).dump(2) + "\n");
  model.vocab.save((tmp / "vocab.txt").string());

  nlohmann::ordered_json m;
  m["format"] = 1;
  m["config_hash"] = config_hash(model.config);
  m["stage"] = state.stage;
  m["step"] = state.step;
  m["epochs_done"] = state.epochs_done;
  m["finished"] = state.finished;
  m["early_stop"] = {{"has_best", state.has_best}, {"best_val", state.best_val}, {"bad_epochs", state.bad_epochs}};
  m["params_sha256"] = sha256_hex(params);
  m["params"] = table;
  if (optimizer) {
    m["optimizer"] = {{"kind", "adamw"},
                      {"steps", optimizer->steps()},
                      {"sha256", sha256_hex(optim)},
                      {"moments", moments}};
  }
  m["history"] = state.history;
  write_file(tmp / "manifest.json", m.dump(2) + "\n");

  fs::remove_all(final_dir, ec);
  fs::rename(tmp, final_dir);
}

json read_manifest(const std::string& dir) {
  const fs::path p = fs::path(dir) / "manifest.json";
  if (!fs::exists(p)) throw DataError("no checkpoint at " + dir + " (manifest.json missing)");
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": malformed manifest (" + e.what() + ")");
  }
}

TrainState load_checkpoint(const std::string& dir, Model& model, num::AdamW* optimizer) {
  const json m = read_manifest(dir);
  const std::string params = read_file(fs::path(dir) / "params.bin");
  if (sha256_hex(params) != m.at("params_sha256").get<std::string>()) {
    throw DataError(dir + ": params.bin does not match its manifest hash");
  }
  std::map<std::string, const json*> entries;
  for (const auto& e : m.at("params")) entries[e.at("name").get<std::string>()] = &e;
  if (entries.size() != model.store.params().size()) {
    throw DataError(dir + ": checkpoint holds " + std::to_string(entries.size()) + " parameters, model has " +
                    std::to_string(model.store.params().size()) + " (different architecture or ablation?)");
  }
  for (auto& p : model.store.params()) {
    auto it = entries.find(p.name);
    if (it == entries.end()) throw DataError(dir + ": parameter '" + p.name + "' missing from checkpoint");
    const auto shape = it->second->at("shape").get<num::Shape>();
    if (shape != p.tensor.shape()) {
      throw DataError(dir + ": parameter '" + p.name + "' has shape " + num::to_string(shape) + ", model expects " +
                      num::to_string(p.tensor.shape()));
    }
    read_floats(params, it->second->at("offset").get<std::size_t>(), p.tensor.mutable_data(), dir + "/params.bin");
  }
  if (optimizer) {
    optimizer->moments().clear();
    optimizer->set_steps(0);
    if (m.contains("optimizer")) {
      const std::string optim = read_file(fs::path(dir) / "optim.bin");
      const json& o = m.at("optimizer");
      if (sha256_hex(optim) != o.at("sha256").get<std::string>()) {
        throw DataError(dir + ": optim.bin does not match its manifest hash");
      }
      optimizer->set_steps(o.at("steps").get<std::int64_t>());
      for (const auto& e : o.at("moments")) {
        const std::string name = e.at("name").get<std::string>();
        const std::size_t n = model.store.get(name).tensor.numel();
        num::AdamW::Moments mom{std::vector<double>(n), std::vector<double>(n)};
        const std::size_t offset = e.at("offset").get<std::size_t>();
        read_floats(optim, offset, mom.m, dir + "/optim.bin");
        read_floats(optim, offset + n * sizeof(float), mom.v, dir + "/optim.bin");
        optimizer->moments()[name] = std::move(mom);
      }
    }
  }
  TrainState s;
  s.stage = m.at("stage").get<int>();
  s.step = m.at("step").get<std::size_t>();
  s.epochs_done = m.at("epochs_done").get<std::size_t>();
  s.finished = m.at("finished").get<bool>();
  const json& es = m.at("early_stop");
  s.has_best = es.at("has_best").get<bool>();
  s.best_val = es.at("best_val").get<double>();
  s.bad_epochs = es.at("bad_epochs").get<std::size_t>();
  s.history = m.at("history");
  return s;
}

}  // namespace xdial::pipeline
