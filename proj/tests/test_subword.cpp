#include <map>

#include "doctest.h"
#include "nmt/subword.hpp"

using namespace nmt;

namespace {

// Brute-force pair counter over a word-frequency table: words split into
// characters with the end-of-word marker attached to the final one. Used as
// the independent oracle for the first learned merge.
std::pair<std::string, std::string> most_frequent_pair(
    const std::map<std::string, long>& word_freq) {
  std::map<std::pair<std::string, std::string>, long> counts;
  for (const auto& [word, freq] : word_freq) {
    std::vector<std::string> syms;
    for (char c : word) syms.push_back(std::string(1, c));
    syms.back() += "</w>";
    for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += freq;
  }
  std::pair<std::string, std::string> best;
  long best_count = -1;
  for (const auto& [pair, c] : counts)
    if (c > best_count) {  // map order = lexicographically smallest wins ties
      best_count = c;
      best = pair;
    }
  return best;
}

Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens, Vocabulary::Role role) {
  Vocabulary v;
  v.role = role;
  for (const char* sp : {"<pad>", "<bos>", "<eos>", "<unk>"}) {
    v.token_to_id.emplace(sp, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(sp);
  }
  for (const auto& t : tokens) {
    v.token_to_id.emplace(t, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(t);
  }
  return v;
}

}  // namespace

TEST_CASE("first merge matches the brute-force pair-count oracle") {
  std::map<std::string, long> corpus{{"low", 5}, {"lower", 2}};
  auto oracle = most_frequent_pair(corpus);
  BpeModel model = learn_bpe(corpus, 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == oracle);
  CHECK(model.merges[0] == std::pair<std::string, std::string>{"l", "o"});
}

TEST_CASE("single-candidate corpus merges it") {
  BpeModel model = learn_bpe({{"aa", 3}}, 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == std::pair<std::string, std::string>{"a", "a</w>"});
}

TEST_CASE("zero merges gives character-level segmentation") {
  BpeModel model = learn_bpe({{"abc", 1}}, 0);
  CHECK(model.merges.empty());
  CHECK(bpe_segment("abc", model) == std::vector<std::string>{"a", "b", "c</w>"});
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(learn_bpe({}, 5), ValueError);
}

TEST_CASE("lower segments as lo/w/e/r</w> under the one-merge model") {
  BpeModel model = learn_bpe({{"low", 5}, {"lower", 2}}, 1);
  CHECK(bpe_segment("lower", model) == std::vector<std::string>{"lo", "w", "e", "r</w>"});
}

TEST_CASE("learn_bpe is deterministic") {
  std::map<std::string, long> corpus{{"banana", 4}, {"bandana", 2}, {"cabana", 7}};
  BpeModel a = learn_bpe(corpus, 12);
  BpeModel b = learn_bpe(corpus, 12);
  CHECK(a.merges == b.merges);
}

TEST_CASE("encode appends eos only for the target role and never emits pad/bos") {
  std::vector<std::string> lines{"the cat sat", "the mat"};
  BpeModel model = learn_bpe(count_words(lines), 10);
  Vocabulary tgt = Vocabulary::build(lines, model, Vocabulary::Role::Target);
  Vocabulary src = Vocabulary::build(lines, model, Vocabulary::Role::Source);

  CHECK(encode("", model, tgt) == std::vector<int>{Vocabulary::kEos});
  CHECK(encode("", model, src).empty());

  for (const auto& line : lines) {
    auto t = encode(line, model, tgt);
    REQUIRE(!t.empty());
    long eos_count = 0;
    for (int id : t) {
      CHECK(id != Vocabulary::kPad);
      CHECK(id != Vocabulary::kBos);
      if (id == Vocabulary::kEos) ++eos_count;
    }
    CHECK(eos_count == 1);
    CHECK(t.back() == Vocabulary::kEos);
  }
}

TEST_CASE("round trip reproduces whitespace-tokenized corpus text") {
  std::vector<std::string> lines{"pita balo kemu", "balo balo dasi gure", "kemu pita",
                                 "gure dasi balo pita kemu"};
  BpeModel model = learn_bpe(count_words(lines), 20);
  Vocabulary tgt = Vocabulary::build(lines, model, Vocabulary::Role::Target);
  for (const auto& line : lines) CHECK(decode_ids(encode(line, model, tgt), tgt) == line);
  CHECK(decode_ids({Vocabulary::kEos}, tgt).empty());
}

TEST_CASE("unknown symbols surface as the literal unk token") {
  std::vector<std::string> lines{"aa bb"};
  BpeModel model = learn_bpe(count_words(lines), 4);
  Vocabulary v = Vocabulary::build(lines, model, Vocabulary::Role::Source);
  auto ids = encode("zz", model, v);
  REQUIRE(!ids.empty());
  for (int id : ids) CHECK(id == Vocabulary::kUnk);
  CHECK(decode_ids(ids, v).find("<unk>") != std::string::npos);
}

TEST_CASE("decode rejects out-of-range ids") {
  Vocabulary v = vocab_from_tokens({"x</w>"}, Vocabulary::Role::Target);
  CHECK_THROWS_AS(decode_ids({99}, v), ValueError);
  CHECK_THROWS_AS(decode_ids({-1}, v), ValueError);
}

TEST_CASE("vocabulary save/load round trip preserves ids and fingerprint") {
  std::vector<std::string> lines{"some words here", "more words"};
  BpeModel model = learn_bpe(count_words(lines), 15);
  Vocabulary v = Vocabulary::build(lines, model, Vocabulary::Role::Target);
  std::string path = "/tmp/nmt_test_vocab.tsv";
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path, Vocabulary::Role::Target);
  CHECK(loaded.id_to_token == v.id_to_token);
  CHECK(loaded.fingerprint() == v.fingerprint());

  std::string mpath = "/tmp/nmt_test_merges.txt";
  model.save(mpath);
  BpeModel mloaded = BpeModel::load(mpath);
  CHECK(mloaded.merges == model.merges);
}
