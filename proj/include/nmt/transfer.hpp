#pragma once

#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/subword.hpp"

// Parameter-transfer initializers for the child model. Both copy every
// non-embedding parameter (and the shared target-side tables) verbatim from
// the parent; they differ only in how child source embeddings are filled.

namespace nmt {

struct TransferReport {
  long matched = 0;
  long randomly_initialized = 0;
  std::vector<std::string> matched_tokens;
  std::vector<std::string> copied_parameter_names;

  std::string to_text() const;
  void save(const std::string& path) const;
};

// TL (random assignment): each child source token receives a uniformly
// random parent source embedding row, with replacement.
std::pair<Model<float>, TransferReport> tl_init(const Model<float>& parent,
                                                const ModelConfig& child_cfg,
                                                const Vocabulary& child_src_vocab,
                                                const Vocabulary& shared_tgt_vocab, uint64_t seed);

// TM (token matching): child source tokens present in the parent source
// vocabulary keep the parent's embedding row bitwise; the rest are drawn
// from the vanilla scheme (normal, std model_dim^-1/2).
std::pair<Model<float>, TransferReport> tm_init(const Model<float>& parent,
                                                const ModelConfig& child_cfg,
                                                const Vocabulary& parent_src_vocab,
                                                const Vocabulary& child_src_vocab,
                                                const Vocabulary& shared_tgt_vocab, uint64_t seed);

}  // namespace nmt
