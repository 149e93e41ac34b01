// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "xdial/numerics/optim.hpp"

namespace xdial::pipeline {

class Model;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

// Exclusive "<dir>.lock" file held for the lifetime of the object. A second
// writer gets a DataError instead of interleaving with the first.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::string path_;
};

// Progress of a stage, stored in the manifest so a run can resume exactly.
struct TrainState {
  int stage = 0;
  std::size_t step = 0;  // optimizer updates done in this stage
  std::size_t epochs_done = 0;
  double best_val = 0.0;
  bool has_best = false;
  std::size_t bad_epochs = 0;
  bool finished = false;
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
};

// Layout of a checkpoint directory:
//   manifest.json  config hash, train state, parameter table, blob hashes
//   params.bin     float32 little-endian, parameters in manifest order
//   optim.bin      float32 AdamW moments (m then v) for the listed parameters
//   config.json    full run config
//   vocab.txt      vocabulary
// The directory is written next to its final place and renamed over it.
void save_checkpoint(const std::string& dir, const Model& model, const num::AdamW* optimizer,
                     const TrainState& state);

// Restores parameters (and optimizer state when given). Hash or layout
// mismatches raise DataError.
TrainState load_checkpoint(const std::string& dir, Model& model, num::AdamW* optimizer = nullptr);

// Config and vocabulary stored with a checkpoint, for rebuilding the model.
nlohmann::ordered_json read_manifest(const std::string& dir);
std::string checkpoint_config_path(const std::string& dir);
std::string checkpoint_vocab_path(const std::string& dir);

}  // namespace xdial::pipeline
