#include <cmath>

#include "doctest.h"
#include "nmt/eval.hpp"

using namespace nmt;

TEST_CASE("bleu of identical corpora is 100") {
  std::vector<std::string> text{"the cat sat on the mat", "a quick brown fox", "one two three four"};
  CHECK(bleu(text, text) == doctest::Approx(100.0));
}

TEST_CASE("bleu is permutation-invariant over sentence order") {
  std::vector<std::string> hyp{"aa bb cc dd", "ee ff gg hh", "ii jj kk ll mm"};
  std::vector<std::string> ref{"aa bb cc xx", "ee ff gg hh", "ii jj kk ll nn"};
  double forward = bleu(hyp, ref);
  std::vector<std::string> hyp_perm{hyp[2], hyp[0], hyp[1]};
  std::vector<std::string> ref_perm{ref[2], ref[0], ref[1]};
  CHECK(bleu(hyp_perm, ref_perm) == doctest::Approx(forward));
}

TEST_CASE("clipped counts drive the hand-computed repeated-token score") {
  // hyp "the the the" vs ref "the cat sat":
  //   p1 = 1/3 (clipped), p2 = 1/(2*2), p3 = 1/(4*1), p4 = 1/(8*1), BP = 1
  double expected = 100.0 * std::pow((1.0 / 3.0) * (1.0 / 4.0) * (1.0 / 4.0) * (1.0 / 8.0), 0.25);
  CHECK(bleu({"the the the"}, {"the cat sat"}) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("bleu brevity penalty and smoothing behave") {
  // short hypothesis: BP = exp(1 - ref/hyp)
  double score = bleu({"aa bb"}, {"aa bb cc dd"});
  CHECK(score < 100.0);
  CHECK(score > 0.0);
  CHECK(bleu({""}, {"aa"}) == doctest::Approx(0.0));
}

TEST_CASE("bleu preconditions") {
  CHECK_THROWS_AS(bleu({}, {}), ValueError);
  CHECK_THROWS_AS(bleu({"a"}, {"a", "b"}), ValueError);
}

TEST_CASE("token accuracy labels from the Levenshtein alignment") {
  auto all = token_accuracy_labels(std::vector<std::string>{"a", "b", "c"},
                                   std::vector<std::string>{"a", "b", "c"});
  CHECK(all == std::vector<uint8_t>{1, 1, 1});

  auto sub = token_accuracy_labels(std::vector<std::string>{"a", "b", "c"},
                                   std::vector<std::string>{"a", "x", "c"});
  CHECK(sub == std::vector<uint8_t>{1, 0, 1});

  auto ins = token_accuracy_labels(std::vector<std::string>{"a"}, std::vector<std::string>{});
  CHECK(ins == std::vector<uint8_t>{0});

  auto none = token_accuracy_labels(std::vector<std::string>{}, std::vector<std::string>{"a"});
  CHECK(none.empty());

  // shifted window: deletion before match
  auto shifted = token_accuracy_labels(std::vector<std::string>{"b", "c"},
                                       std::vector<std::string>{"a", "b", "c"});
  CHECK(shifted == std::vector<uint8_t>{1, 1});
}

TEST_CASE("calibration aggregation arithmetic") {
  // two generated tokens, confidences 0.9 and 0.8, both correct
  CalibrationReport rep = calibration_from_tokens({0.9, 0.8}, {1, 1});
  CHECK(rep.mean_confidence == doctest::Approx(0.85));
  CHECK(rep.token_accuracy == doctest::Approx(1.0));
  CHECK(rep.gap == doctest::Approx(-0.15));
  CHECK(rep.total_tokens == 2);

  long count_sum = 0;
  for (const auto& b : rep.buckets) count_sum += b.count;
  CHECK(count_sum == rep.total_tokens);
  CHECK(rep.buckets[9].count == 1);  // 0.9 lands in [0.9, 1.0]
  CHECK(rep.buckets[8].count == 1);

  // gap identity holds on random data and bucket counts cover every token
  Rng rng(8);
  std::vector<double> conf;
  std::vector<uint8_t> labels;
  for (int i = 0; i < 500; ++i) {
    conf.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.6) ? 1 : 0);
  }
  CalibrationReport r2 = calibration_from_tokens(conf, labels);
  CHECK(r2.gap == doctest::Approx(r2.mean_confidence - r2.token_accuracy));
  long total = 0;
  for (const auto& b : r2.buckets) total += b.count;
  CHECK(total == 500);

  std::string text = r2.to_text();
  CHECK(text.find("mean_confidence") != std::string::npos);
  CHECK(text.find("bucket_lo") != std::string::npos);
}

TEST_CASE("a perfectly calibrated oracle has near-zero gap") {
  // one-hot confidence on always-correct tokens
  std::vector<double> conf(50, 1.0);
  std::vector<uint8_t> labels(50, 1);
  CalibrationReport rep = calibration_from_tokens(conf, labels);
  CHECK(rep.mean_confidence == doctest::Approx(1.0));
  CHECK(rep.token_accuracy == doctest::Approx(1.0));
  CHECK(std::abs(rep.gap) < 1e-12);
}
