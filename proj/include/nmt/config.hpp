#pragma once

#include <optional>
#include <string>

#include "nmt/consist.hpp"
#include "nmt/corpus.hpp"
#include "nmt/decode.hpp"
#include "nmt/model.hpp"
#include "nmt/train.hpp"

// Declarative experiment configuration (JSON). Unknown keys are rejected so
// typos cannot silently change an experiment.

namespace nmt {

struct BpeConfig {
  int parent_src_merges = 700;
  int child_src_merges = 400;
  int target_merges = 700;
};

struct DataGenConfig {
  SyntheticLanguageSpec spec;
  long parent_pairs = 20000;
  long child_pairs = 500;
  long valid_pairs = 500;
  long test_pairs = 1000;
  long mono_sentences = 500;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  std::optional<ConsistConfig> consist;
  std::optional<double> rdrop_weight;
  DecodeParams decode;
  DataGenConfig datagen;
  BpeConfig bpe;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& json_text, const std::string& origin);
  std::string dump() const;
  void save(const std::string& path) const;
};

}  // namespace nmt
