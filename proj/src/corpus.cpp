#include "nmt/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "nmt/rng.hpp"

namespace nmt {

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Real: return "real";
    case Provenance::PseudoParent: return "pseudo_parent";
    default: return "back_translated";
  }
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "real") return Provenance::Real;
  if (s == "pseudo_parent") return Provenance::PseudoParent;
  if (s == "back_translated") return Provenance::BackTranslated;
  throw IoError("unknown provenance tag '" + s + "'");
}

SynLanguage syn_language_from_name(const std::string& s) {
  if (s == "target") return SynLanguage::Target;
  if (s == "parent") return SynLanguage::Parent;
  if (s == "child") return SynLanguage::Child;
  throw ValueError("unknown synthetic language '" + s + "' (expected target, parent or child)");
}

void ParallelCorpus::save(const std::string& src_path, const std::string& tgt_path,
                          const std::string& prov_path) const {
  write_lines(src_path, source);
  write_lines(tgt_path, target);
  if (!prov_path.empty()) {
    std::vector<std::string> tags;
    tags.reserve(provenance.size());
    for (Provenance p : provenance) tags.emplace_back(provenance_name(p));
    write_lines(prov_path, tags);
  }
}

ParallelCorpus ParallelCorpus::load(const std::string& src_path, const std::string& tgt_path,
                                    const std::string& prov_path) {
  ParallelCorpus c;
  c.source = read_lines(src_path);
  c.target = read_lines(tgt_path);
  if (c.source.size() != c.target.size())
    throw IoError("parallel files are not aligned: " + src_path + " has " +
                  std::to_string(c.source.size()) + " lines, " + tgt_path + " has " +
                  std::to_string(c.target.size()));
  if (!prov_path.empty()) {
    for (const auto& tag : read_lines(prov_path)) c.provenance.push_back(provenance_from_name(tag));
    if (c.provenance.size() != c.source.size())
      throw IoError("provenance sidecar is not aligned with " + src_path);
  } else {
    c.provenance.assign(c.source.size(), Provenance::Real);
  }
  return c;
}

void SyntheticLanguageSpec::validate() const {
  if (base_vocab_size < 2) throw ValueError("synthetic: base_vocab_size must be >= 2");
  if (cognate_fraction < 0.0 || cognate_fraction > 1.0)
    throw ValueError("synthetic: cognate_fraction must be in [0,1]");
  if (reorder_window < 0) throw ValueError("synthetic: reorder_window must be >= 0");
  if (min_len < 1 || max_len < min_len) throw ValueError("synthetic: bad length range");
  if (zipf_exponent < 0.0) throw ValueError("synthetic: zipf_exponent must be >= 0");
}

namespace {

uint64_t lang_seed(const SyntheticLanguageSpec& spec, SynLanguage lang) {
  switch (lang) {
    case SynLanguage::Target: return spec.target_seed;
    case SynLanguage::Parent: return spec.parent_seed;
    default: return spec.child_seed;
  }
}

// Syllabic surface word, 2-3 CV(C) syllables from a shared inventory so
// subword overlap across languages arises naturally.
std::string draw_word(Rng& rng) {
  static const char* kConsonants = "bdfgklmnprst";
  static const char* kVowels = "aeiou";
  int syllables = 2 + static_cast<int>(rng.integer(2));
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.index(12)];
    w += kVowels[rng.index(5)];
    if (rng.bernoulli(0.25)) w += kConsonants[rng.index(12)];
  }
  return w;
}

std::vector<std::string> fresh_lexicon(long n, uint64_t seed,
                                       const std::set<std::string>& avoid) {
  Rng rng(mix_seed(seed, 0x1e1c));
  std::set<std::string> used;
  std::vector<std::string> lex;
  lex.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    std::string w = draw_word(rng);
    while (used.count(w) || avoid.count(w)) w = draw_word(rng);
    used.insert(w);
    lex.push_back(std::move(w));
  }
  return lex;
}

long factorial(int k) {
  long f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Lehmer unranking of permutation `rank` over k elements.
void apply_permutation(std::vector<long>& block, long rank) {
  int k = static_cast<int>(block.size());
  std::vector<long> pool(block.begin(), block.end());
  for (int i = 0; i < k; ++i) {
    long f = factorial(k - 1 - i);
    long idx = rank / f;
    rank %= f;
    block[static_cast<size_t>(i)] = pool[static_cast<size_t>(idx)];
    pool.erase(pool.begin() + idx);
  }
}

}  // namespace

std::vector<std::string> build_lexicon(const SyntheticLanguageSpec& spec, SynLanguage lang) {
  spec.validate();
  if (lang != SynLanguage::Child)
    return fresh_lexicon(spec.base_vocab_size, lang_seed(spec, lang), {});

  // Child surfaces: cognates copy the parent surface for the same base token;
  // the rest are fresh words disjoint from the parent lexicon (no false
  // friends by construction).
  std::vector<std::string> parent = build_lexicon(spec, SynLanguage::Parent);
  std::set<std::string> avoid(parent.begin(), parent.end());
  Rng coins(mix_seed(spec.child_seed, 0xC01));
  std::vector<std::string> fresh = fresh_lexicon(spec.base_vocab_size, spec.child_seed, avoid);
  std::vector<std::string> lex(static_cast<size_t>(spec.base_vocab_size));
  for (long i = 0; i < spec.base_vocab_size; ++i)
    lex[static_cast<size_t>(i)] = coins.bernoulli(spec.cognate_fraction)
                                      ? parent[static_cast<size_t>(i)]
                                      : fresh[static_cast<size_t>(i)];
  return lex;
}

std::vector<long> reorder_base(const std::vector<long>& base, const SyntheticLanguageSpec& spec,
                               SynLanguage lang) {
  if (spec.reorder_window == 0 || lang == SynLanguage::Target) return base;
  std::vector<long> out = base;
  const uint64_t seed = lang_seed(spec, lang);
  size_t block_size = static_cast<size_t>(spec.reorder_window) + 1;
  size_t p = 0;
  while (p < out.size()) {
    size_t k = std::min(block_size, out.size() - p);
    if (k > 1) {
      uint64_t h = fnv1a_u64(seed);
      for (size_t i = 0; i < k; ++i) h = fnv1a_u64(static_cast<uint64_t>(out[p + i]), h);
      std::vector<long> block(out.begin() + static_cast<long>(p),
                              out.begin() + static_cast<long>(p + k));
      apply_permutation(block, static_cast<long>(h % static_cast<uint64_t>(factorial(
                                   static_cast<int>(k)))));
      std::copy(block.begin(), block.end(), out.begin() + static_cast<long>(p));
    }
    p += k;
  }
  return out;
}

std::string render(const SyntheticLanguageSpec& spec, SynLanguage lang,
                   const std::vector<long>& base) {
  std::vector<std::string> lex = build_lexicon(spec, lang);
  std::vector<long> ordered = reorder_base(base, spec, lang);
  std::string out;
  for (size_t i = 0; i < ordered.size(); ++i) {
    if (i) out += ' ';
    out += lex[static_cast<size_t>(ordered[i])];
  }
  return out;
}

SyntheticCorpus gen_synthetic(const SyntheticLanguageSpec& spec, long n_pairs, uint64_t seed,
                              SynLanguage source_lang) {
  spec.validate();
  if (n_pairs < 1) throw ValueError("gen_synthetic: n_pairs must be >= 1");
  if (source_lang == SynLanguage::Target)
    throw ValueError("gen_synthetic: source language must be parent or child");

  std::vector<std::string> src_lex = build_lexicon(spec, source_lang);
  std::vector<std::string> tgt_lex = build_lexicon(spec, SynLanguage::Target);

  // Zipf inverse-CDF over base token ids (id 0 most frequent).
  std::vector<double> cdf(static_cast<size_t>(spec.base_vocab_size));
  double acc = 0.0;
  for (long i = 0; i < spec.base_vocab_size; ++i) {
    acc += 1.0 / std::pow(double(i + 1), spec.zipf_exponent);
    cdf[static_cast<size_t>(i)] = acc;
  }
  for (auto& v : cdf) v /= acc;

  Rng rng(mix_seed(seed, 0x9e4));
  SyntheticCorpus out;
  out.base_sentences.reserve(static_cast<size_t>(n_pairs));
  for (long n = 0; n < n_pairs; ++n) {
    long len = spec.min_len + static_cast<long>(rng.integer(
                   static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    std::vector<long> base(static_cast<size_t>(len));
    for (long i = 0; i < len; ++i) {
      double u = rng.uniform();
      base[static_cast<size_t>(i)] =
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    }
    std::vector<long> src_order = reorder_base(base, spec, source_lang);
    std::string src, tgt;
    for (size_t i = 0; i < base.size(); ++i) {
      if (i) {
        src += ' ';
        tgt += ' ';
      }
      src += src_lex[static_cast<size_t>(src_order[i])];
      tgt += tgt_lex[static_cast<size_t>(base[i])];
    }
    out.corpus.push(std::move(src), std::move(tgt), Provenance::Real);
    out.base_sentences.push_back(std::move(base));
  }
  return out;
}

ParallelCorpus filter_pairs(const ParallelCorpus& corpus, long max_len, double max_ratio) {
  ParallelCorpus out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    long ns = static_cast<long>(split_whitespace(corpus.source[i]).size());
    long nt = static_cast<long>(split_whitespace(corpus.target[i]).size());
    if (ns == 0 || nt == 0) continue;
    if (ns > max_len || nt > max_len) continue;
    double ratio = double(std::max(ns, nt)) / double(std::min(ns, nt));
    if (ratio > max_ratio) continue;
    out.push(corpus.source[i], corpus.target[i],
             corpus.provenance.empty() ? Provenance::Real : corpus.provenance[i]);
  }
  return out;
}

ParallelCorpus sample_pairs(const ParallelCorpus& corpus, double ratio, uint64_t seed) {
  if (ratio <= 0.0 || ratio > 1.0) throw ValueError("sample_pairs: ratio must be in (0,1]");
  if (ratio == 1.0) return corpus;
  size_t keep = static_cast<size_t>(std::ceil(ratio * double(corpus.size())));
  std::vector<size_t> indices(corpus.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  Rng rng(mix_seed(seed, 0x5a17));
  rng.shuffle(indices.begin(), indices.end());
  indices.resize(keep);
  std::sort(indices.begin(), indices.end());
  ParallelCorpus out;
  for (size_t i : indices)
    out.push(corpus.source[i], corpus.target[i],
             corpus.provenance.empty() ? Provenance::Real : corpus.provenance[i]);
  return out;
}

namespace {

std::vector<std::string> back_translate(const std::vector<std::string>& targets,
                                        const Translator& tr, const DecodeParams& params,
                                        int threads, const char* what) {
  std::vector<std::string> out(targets.size());
  std::exception_ptr first_error;
  size_t error_line = 0;
  auto work = [&](size_t i) {
    try {
      out[i] = tr.translate(targets[i], params);
    } catch (...) {
      if (!first_error) {
        first_error = std::current_exception();
        error_line = i + 1;
      }
    }
  };
  if (threads <= 1) {
    for (size_t i = 0; i < targets.size() && !first_error; ++i) work(i);
  } else {
    std::vector<std::string> translated = translate_corpus(tr, targets, params, threads);
    out = std::move(translated);
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      throw IoError(std::string(what) + ": decode failed at line " + std::to_string(error_line) +
                    ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ParallelCorpus make_pseudo_parent(const ParallelCorpus& child, const Translator& reversed_parent,
                                  const DecodeParams& params, int threads) {
  std::vector<std::string> pseudo =
      back_translate(child.target, reversed_parent, params, threads, "make_pseudo_parent");
  ParallelCorpus out;
  for (size_t i = 0; i < child.size(); ++i)
    out.push(pseudo[i], child.target[i], Provenance::PseudoParent);
  return out;
}

ParallelCorpus augment_back_translation(const ParallelCorpus& child,
                                        const std::vector<std::string>& target_mono,
                                        const Translator& reversed_child,
                                        const DecodeParams& params, int threads) {
  ParallelCorpus out = child;
  if (target_mono.empty()) return out;
  std::vector<std::string> sources =
      back_translate(target_mono, reversed_child, params, threads, "augment_back_translation");
  for (size_t i = 0; i < target_mono.size(); ++i)
    out.push(sources[i], target_mono[i], Provenance::BackTranslated);
  return out;
}

}  // namespace nmt
