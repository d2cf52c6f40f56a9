#pragma once

#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/decode.hpp"

// Translation quality (smoothed corpus BLEU-4) and inference-calibration
// analysis (confidence vs token accuracy).

namespace nmt {

// Corpus BLEU-4 in [0,100]: whitespace tokenization, clipped n-gram
// precisions, brevity penalty, exponential smoothing for zero n-gram counts.
double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

// Per-hypothesis-token correctness labels from a Levenshtein alignment
// (match 0, substitution/insertion/deletion 1; ties prefer match over
// substitution over insertion over deletion). Hypothesis tokens aligned as
// matches are correct.
std::vector<uint8_t> token_accuracy_labels(const std::vector<std::string>& hypothesis,
                                           const std::vector<std::string>& reference);
std::vector<uint8_t> token_accuracy_labels(const std::vector<int>& hypothesis,
                                           const std::vector<int>& reference);

struct CalibrationReport {
  struct Bucket {
    double lo = 0.0, hi = 0.0;
    long count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
  };
  double mean_confidence = 0.0;
  double token_accuracy = 0.0;
  double gap = 0.0;  // mean_confidence - token_accuracy
  long total_tokens = 0;
  std::vector<Bucket> buckets;  // ten fixed-width confidence bins

  std::string to_text() const;
  void save(const std::string& path) const;
};

// Aggregates per-token confidences and correctness labels into the report.
CalibrationReport calibration_from_tokens(const std::vector<double>& confidences,
                                          const std::vector<uint8_t>& labels);

// Decodes every test source; each generated token's confidence is its
// estimated probability at generation time; correctness comes from the
// Levenshtein alignment against the BPE-encoded reference.
CalibrationReport calibration_report(const Translator& translator, const Codec& target_codec,
                                     const ParallelCorpus& test, const DecodeParams& params,
                                     int threads = 1);

}  // namespace nmt
