#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/common.hpp"

// Byte-pair-encoding training and application, and the token<->id
// vocabulary built on top of it. Models and vocabularies are immutable
// after construction and safe for concurrent readers.

namespace nmt {

struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;  // learned order

  // Merge priority: position in the learned list.
  const std::unordered_map<std::string, int>& ranks() const;

  void save(const std::string& path) const;  // one "left right" pair per line
  static BpeModel load(const std::string& path);

 private:
  mutable std::unordered_map<std::string, int> rank_cache_;
};

// Greedy most-frequent-pair merging over a word-frequency table, with the
// end-of-word marker attached to the final character. Ties between pair
// counts break toward the lexicographically smallest pair.
BpeModel learn_bpe(const std::map<std::string, long>& word_freq, int merge_count);

// Splits a word into BPE symbols (final symbol carries "</w>").
std::vector<std::string> bpe_segment(const std::string& word, const BpeModel& model);

// Word frequencies from whitespace-tokenized lines.
std::map<std::string, long> count_words(const std::vector<std::string>& lines);

std::vector<std::string> split_whitespace(const std::string& line);

struct Vocabulary {
  enum class Role { Source, Target };

  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_token;  // specials occupy ids 0..3
  std::unordered_map<std::string, int> token_to_id;
  Role role = Role::Source;

  long size() const { return static_cast<long>(id_to_token.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;  // throws on out-of-range id

  // Symbols appearing in the BPE-segmented corpus, ordered by descending
  // frequency then token text, after the four specials.
  static Vocabulary build(const std::vector<std::string>& lines, const BpeModel& model, Role role);

  uint64_t fingerprint() const;

  void save(const std::string& path) const;  // "token<TAB>id" per line
  static Vocabulary load(const std::string& path, Role role);
};

// BPE-encodes a sentence: whitespace pre-tokenization, merges applied in
// learned order, unknown residual symbols mapped to unk, eos appended for
// the target role.
std::vector<int> encode(const std::string& sentence, const BpeModel& model,
                        const Vocabulary& vocab);

// Inverse of encode up to unk-collapsed symbols; strips specials and
// rejoins on end-of-word markers.
std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab);

// A BPE model plus its vocabulary; the unit a translation side needs.
struct Codec {
  BpeModel bpe;
  Vocabulary vocab;

  std::vector<int> encode(const std::string& sentence) const {
    return nmt::encode(sentence, bpe, vocab);
  }
  std::string decode(const std::vector<int>& ids) const { return decode_ids(ids, vocab); }
};

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace nmt
