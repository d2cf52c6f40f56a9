#include "nmt/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace nmt {

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references) {
  if (hypotheses.empty()) throw ValueError("bleu: empty hypothesis set");
  if (hypotheses.size() != references.size())
    throw ValueError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                     std::to_string(references.size()) + " references");

  constexpr int kMaxOrder = 4;
  long correct[kMaxOrder] = {0, 0, 0, 0};
  long total[kMaxOrder] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;

  for (size_t s = 0; s < hypotheses.size(); ++s) {
    std::vector<std::string> hyp = split_whitespace(hypotheses[s]);
    std::vector<std::string> ref = split_whitespace(references[s]);
    hyp_len += static_cast<long>(hyp.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      if (static_cast<long>(hyp.size()) < n) continue;
      std::map<std::string, long> hyp_ngrams, ref_ngrams;
      auto collect = [n](const std::vector<std::string>& toks, std::map<std::string, long>& out) {
        for (size_t i = 0; i + n <= toks.size(); ++i) {
          std::string key = toks[i];
          for (int j = 1; j < n; ++j) key += '\x1f' + toks[i + static_cast<size_t>(j)];
          ++out[key];
        }
      };
      collect(hyp, hyp_ngrams);
      collect(ref, ref_ngrams);
      for (const auto& [gram, count] : hyp_ngrams) {
        total[n - 1] += count;
        auto it = ref_ngrams.find(gram);
        if (it != ref_ngrams.end()) correct[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  // Exponential smoothing: each zero-match order halves an extra smoothing
  // factor; empty denominators are treated as 1 under the same formula.
  double log_p_sum = 0.0;
  double smooth = 1.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p;
    if (correct[n] > 0) {
      p = double(correct[n]) / double(total[n]);
    } else {
      smooth *= 2.0;
      p = 1.0 / (smooth * double(std::max(total[n], 1L)));
    }
    log_p_sum += std::log(p);
  }
  double bp = hyp_len < ref_len ? std::exp(1.0 - double(ref_len) / double(hyp_len)) : 1.0;
  return 100.0 * bp * std::exp(log_p_sum / kMaxOrder);
}

namespace {

// Levenshtein with deterministic traceback preference
// match > substitution > insertion > deletion. "Insertion" consumes a
// hypothesis token, "deletion" consumes a reference token.
template <typename Tok>
std::vector<uint8_t> levenshtein_labels(const std::vector<Tok>& hyp,
                                        const std::vector<Tok>& ref) {
  size_t m = hyp.size(), n = ref.size();
  std::vector<std::vector<long>> dp(m + 1, std::vector<long>(n + 1, 0));
  for (size_t i = 1; i <= m; ++i) dp[i][0] = static_cast<long>(i);
  for (size_t j = 1; j <= n; ++j) dp[0][j] = static_cast<long>(j);
  for (size_t i = 1; i <= m; ++i)
    for (size_t j = 1; j <= n; ++j) {
      long diag = dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      dp[i][j] = std::min({diag, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
    }
  std::vector<uint8_t> labels(m, 0);
  size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && hyp[i - 1] == ref[j - 1] && dp[i][j] == dp[i - 1][j - 1]) {
      labels[i - 1] = 1;  // match
      --i;
      --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      labels[i - 1] = 0;  // substitution
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      labels[i - 1] = 0;  // insertion (spurious hypothesis token)
      --i;
    } else {
      --j;  // deletion (missed reference token)
    }
  }
  return labels;
}

}  // namespace

std::vector<uint8_t> token_accuracy_labels(const std::vector<std::string>& hypothesis,
                                           const std::vector<std::string>& reference) {
  return levenshtein_labels(hypothesis, reference);
}

std::vector<uint8_t> token_accuracy_labels(const std::vector<int>& hypothesis,
                                           const std::vector<int>& reference) {
  return levenshtein_labels(hypothesis, reference);
}

std::string CalibrationReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  out << "mean_confidence\t" << mean_confidence << '\n';
  out << "token_accuracy\t" << token_accuracy << '\n';
  out << "gap\t" << gap << '\n';
  out << "total_tokens\t" << total_tokens << '\n';
  out << "bucket_lo\tbucket_hi\tcount\tmean_confidence\taccuracy\n";
  for (const auto& b : buckets)
    out << b.lo << '\t' << b.hi << '\t' << b.count << '\t' << b.mean_confidence << '\t'
        << b.accuracy << '\n';
  return out.str();
}

void CalibrationReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration report: " + path);
  out << to_text();
}

CalibrationReport calibration_from_tokens(const std::vector<double>& confidences,
                                          const std::vector<uint8_t>& labels) {
  if (confidences.size() != labels.size())
    throw ValueError("calibration: confidence/label count mismatch");
  CalibrationReport rep;
  rep.buckets.resize(10);
  for (int b = 0; b < 10; ++b) {
    rep.buckets[static_cast<size_t>(b)].lo = b / 10.0;
    rep.buckets[static_cast<size_t>(b)].hi = (b + 1) / 10.0;
  }
  std::vector<double> bucket_conf(10, 0.0), bucket_correct(10, 0.0);
  double conf_sum = 0.0, correct_sum = 0.0;
  for (size_t t = 0; t < confidences.size(); ++t) {
    double c = confidences[t];
    int b = std::min(9, std::max(0, static_cast<int>(c * 10.0)));
    ++rep.buckets[static_cast<size_t>(b)].count;
    bucket_conf[static_cast<size_t>(b)] += c;
    bucket_correct[static_cast<size_t>(b)] += labels[t] ? 1.0 : 0.0;
    conf_sum += c;
    correct_sum += labels[t] ? 1.0 : 0.0;
    ++rep.total_tokens;
  }
  for (int b = 0; b < 10; ++b) {
    auto& bucket = rep.buckets[static_cast<size_t>(b)];
    if (bucket.count > 0) {
      bucket.mean_confidence = bucket_conf[static_cast<size_t>(b)] / double(bucket.count);
      bucket.accuracy = bucket_correct[static_cast<size_t>(b)] / double(bucket.count);
    }
  }
  if (rep.total_tokens > 0) {
    rep.mean_confidence = conf_sum / double(rep.total_tokens);
    rep.token_accuracy = correct_sum / double(rep.total_tokens);
  }
  rep.gap = rep.mean_confidence - rep.token_accuracy;
  return rep;
}

CalibrationReport calibration_report(const Translator& translator, const Codec& target_codec,
                                     const ParallelCorpus& test, const DecodeParams& params,
                                     int threads) {
  if (test.size() == 0) throw ValueError("calibration_report: empty test corpus");

  struct SentenceStats {
    std::vector<float> confidences;
    std::vector<uint8_t> labels;
  };
  std::vector<SentenceStats> stats(test.size());
  auto work = [&](size_t i) {
    DecodeResult res = translator.decode_sentence(test.source[i], params);
    std::vector<int> ref_ids = target_codec.encode(test.target[i]);
    if (!ref_ids.empty() && ref_ids.back() == Vocabulary::kEos) ref_ids.pop_back();
    stats[i].confidences = res.token_probs;
    stats[i].labels = token_accuracy_labels(res.ids, ref_ids);
  };
  if (threads <= 1) {
    for (size_t i = 0; i < test.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> cursor{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (size_t i = cursor.fetch_add(1); i < test.size(); i = cursor.fetch_add(1)) work(i);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<double> confidences;
  std::vector<uint8_t> labels;
  for (const auto& s : stats) {
    for (size_t t = 0; t < s.confidences.size(); ++t) {
      confidences.push_back(double(s.confidences[t]));
      labels.push_back(s.labels[t]);
    }
  }
  return calibration_from_tokens(confidences, labels);
}

}  // namespace nmt
