#pragma once

// Run configuration: one JSON document covering the environment, the nets,
// gating, and the training loop, plus artifact paths. A config resolves to a
// canonical serialized form; the FNV-1a hash of that form (paths excluded)
// names the output directory and is stamped into every artifact that has a
// metadata slot.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ig/train/trainer.hpp"

namespace ig {

struct DataPaths {
  std::string dataset;      // training dataset (train / sweep / render-masks)
  std::string probe_train;  // probe splits (probe / sweep)
  std::string probe_eval;
  std::string params;       // IGPS file (probe: encoder, render-masks: mask net)
};

struct SweepSpec {
  std::vector<double> lambdas = {0.01, 0.1, 1.0, 10.0};
  std::vector<uint64_t> seeds = {1, 2, 3};
};

struct RunConfig {
  uint64_t seed = 7;
  std::string outdir = "out";
  EnvConfig env;
  GenConfig gen;
  TrainConfig train;  // nests NetConfig and GateConfig
  DataPaths data;
  SweepSpec sweep;
  int render_records = 8;
};

// Strict parse: unknown keys, malformed values, and unknown enum names all
// throw with the offending key in the message. Missing keys keep defaults.
RunConfig parse_config_text(const std::string& text);

// Reads and parses a config file; distinct errors for an unreadable file vs
// malformed content.
RunConfig load_config_file(const std::string& path);

// Full canonical serialization (fixed key order, every field emitted).
// parse(canonical(cfg)) == cfg and canonical is a fixed point of the pair.
std::string canonical_config(const RunConfig& cfg);

uint64_t fnv1a64(std::string_view s);

// 16 lowercase hex chars over the canonical form minus outdir and data paths:
// the hash identifies what is computed, not where files happen to live.
std::string config_hash(const RunConfig& cfg);

}  // namespace ig
