#pragma once

#include <string>
#include <vector>

#include "nmt/decode.hpp"
#include "nmt/subword.hpp"

// Synthetic bilingual data, data filtering, pseudo-parent-source
// construction, and back-translation augmentation.
//
// The testbed renders one underlying token stream ("base" sentences) into
// three surface languages: the target language E (identity rendering), a
// high-resource parent source language P, and a low-resource child source
// language C. Source languages are bijective relabelings of the base
// vocabulary plus a content-deterministic local reordering, so semantic
// equivalence across languages is machine-checkable.

namespace nmt {

enum class Provenance { Real, PseudoParent, BackTranslated };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct ParallelCorpus {
  std::vector<std::string> source;
  std::vector<std::string> target;
  std::vector<Provenance> provenance;

  size_t size() const { return source.size(); }
  void push(std::string src, std::string tgt, Provenance prov) {
    source.push_back(std::move(src));
    target.push_back(std::move(tgt));
    provenance.push_back(prov);
  }

  void save(const std::string& src_path, const std::string& tgt_path,
            const std::string& prov_path = "") const;
  static ParallelCorpus load(const std::string& src_path, const std::string& tgt_path,
                             const std::string& prov_path = "");
};

enum class SynLanguage { Target, Parent, Child };

SynLanguage syn_language_from_name(const std::string& s);

struct SyntheticLanguageSpec {
  long base_vocab_size = 240;
  uint64_t target_seed = 11;
  uint64_t parent_seed = 22;
  uint64_t child_seed = 33;
  double cognate_fraction = 0.3;  // child surface forms copied from the parent language
  int reorder_window = 1;         // tokens may move within blocks of window+1; 0 disables
  int min_len = 4;
  int max_len = 12;
  double zipf_exponent = 1.0;

  void validate() const;
};

// Deterministic surface vocabulary of one language (index = base token id).
std::vector<std::string> build_lexicon(const SyntheticLanguageSpec& spec, SynLanguage lang);

// Content-deterministic local reordering: the base sentence is cut into
// blocks of reorder_window+1 tokens and each block is permuted by a hash of
// its content and the language seed.
std::vector<long> reorder_base(const std::vector<long>& base, const SyntheticLanguageSpec& spec,
                               SynLanguage lang);

// Surface rendering of a base sentence in one language. The target language
// renders identically ordered; source languages are relabeled and reordered.
std::string render(const SyntheticLanguageSpec& spec, SynLanguage lang,
                   const std::vector<long>& base);

struct SyntheticCorpus {
  ParallelCorpus corpus;                         // (source_lang rendering, target rendering)
  std::vector<std::vector<long>> base_sentences; // ground truth for verification
};

// Samples base sentences (iid Zipf tokens, uniform lengths) and renders the
// requested source language against the target language.
SyntheticCorpus gen_synthetic(const SyntheticLanguageSpec& spec, long n_pairs, uint64_t seed,
                              SynLanguage source_lang);

// Removes pairs where either side exceeds max_len whitespace words, either
// side is empty, or the length ratio exceeds max_ratio.
ParallelCorpus filter_pairs(const ParallelCorpus& corpus, long max_len = 60,
                            double max_ratio = 1.5);

// Seeded subsample keeping ceil(ratio * size) pairs in original order.
ParallelCorpus sample_pairs(const ParallelCorpus& corpus, double ratio, uint64_t seed);

// Back-translates each target sentence through the reversed parent model,
// yielding order-aligned pseudo-parent instances <x~_p, y>.
ParallelCorpus make_pseudo_parent(const ParallelCorpus& child, const Translator& reversed_parent,
                                  const DecodeParams& params, int threads = 1);

// Concatenates the real pairs with back-translated <source, mono target>
// pairs produced by the reversed child model.
ParallelCorpus augment_back_translation(const ParallelCorpus& child,
                                        const std::vector<std::string>& target_mono,
                                        const Translator& reversed_child,
                                        const DecodeParams& params, int threads = 1);

}  // namespace nmt
