#pragma once

#include <cstdint>
#include <string>

#include "ssvae/data.hpp"
#include "ssvae/training.hpp"

namespace ssvae {

// Full experiment description. Serializes to flat key=value text; CLI
// flags override file values. A copy is written into the output
// directory of every run.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/exp";
  std::size_t epochs = 20;
  std::size_t batch_size = 32;

  // data.source = synth | file
  std::string data_source = "synth";
  std::string data_train;  // required when data.source=file
  std::string data_test;   // optional separate test file
  std::size_t max_len = 60;

  SynthSpec synth{};

  std::size_t vocab_max_size = 2000;
  std::size_t vocab_min_freq = 1;

  std::size_t labeled_per_class = SIZE_MAX;  // "all"
  double valid_frac = 0.20;
  double test_frac = 0.20;

  ModelConfig model{};
  TrainOptions train{};

  // Keep the nested copies consistent after field edits.
  void finalize();
};

// Reference hyperparameters from the source experiments; not a desk-scale
// default (512-cell doubles on CPU are slow).
void apply_paper_profile(RunConfig& cfg);

RunConfig parse_config_file(const std::string& path);
// key=value application; unknown keys throw with the key named.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const RunConfig& cfg);

// Rebuilds corpus + vocab + split for a config (synth is regenerated
// deterministically from its spec).
struct DataBundle {
  std::vector<Document> documents;
  Vocab vocab;
  Splits splits;
};

DataBundle prepare_data(const RunConfig& cfg);

}  // namespace ssvae
