#include <cmath>

#include "doctest.h"
#include "nmt/checkpoint.hpp"
#include "nmt/decode.hpp"
#include "nmt/eval.hpp"
#include "nmt/train.hpp"
#include "nmt/transfer.hpp"

using namespace nmt;

TEST_CASE("lr_at follows the inverse square root schedule") {
  CHECK(lr_at(1000, 1000, 2e-4) == doctest::Approx(2e-4));
  CHECK(lr_at(4000, 1000, 2e-4) == doctest::Approx(1e-4));
  CHECK(lr_at(500, 1000, 2e-4) == doctest::Approx(1e-4));
  CHECK_THROWS_AS(lr_at(0, 1000, 2e-4), ValueError);

  // continuous at the warmup boundary, strictly decreasing after it
  double at = lr_at(1000, 1000, 2e-4);
  double just_before = lr_at(999, 1000, 2e-4);
  double just_after = lr_at(1001, 1000, 2e-4);
  CHECK(std::abs(at - just_before) < 2.1e-7);
  CHECK(std::abs(at - just_after) < 2.1e-7);
  double prev = at;
  for (long s = 1001; s < 1100; ++s) {
    double cur = lr_at(s, 1000, 2e-4);
    CHECK(cur < prev);
    prev = cur;
  }
}

namespace {

ParamStore<float> single_param(float value) {
  ParamStore<float> p;
  p.add("w", Tensor<float>::from({1}, {value}, true));
  return p;
}

}  // namespace

TEST_CASE("adam hand-evaluated recurrences") {
  // zero gradient: parameters unchanged
  ParamStore<float> p = single_param(3.0f);
  Adam opt;
  opt.step(p, 0.1);
  CHECK(p.at("w").data()[0] == 3.0f);

  // constant g=1 at step 1: bias-corrected m-hat/sqrt(v-hat) = 1, so the
  // update is lr / (1 + eps) up to eps
  ParamStore<float> q = single_param(0.0f);
  q.at("w").grad()[0] = 1.0f;
  Adam opt2;
  opt2.step(q, 0.01);
  CHECK(q.at("w").data()[0] == doctest::Approx(-0.01).epsilon(1e-4));

  // non-finite gradient aborts with the parameter named
  ParamStore<float> r = single_param(0.0f);
  r.at("w").grad()[0] = std::numeric_limits<float>::quiet_NaN();
  Adam opt3;
  CHECK_THROWS_WITH_AS(opt3.step(r, 0.01), doctest::Contains("'w'"), NumericError);
}

TEST_CASE("train mode defaults follow the configured regimes") {
  TrainConfig parent;
  parent.mode = TrainMode::Parent;
  TrainConfig rp = parent.resolved();
  CHECK(rp.warmup_steps == 10000);
  CHECK(rp.peak_lr == doctest::Approx(1e-3));
  CHECK(rp.dropout == doctest::Approx(0.1));

  TrainConfig scratch;
  scratch.mode = TrainMode::Scratch;
  TrainConfig rs = scratch.resolved();
  CHECK(rs.warmup_steps == 8000);
  CHECK(rs.peak_lr == doctest::Approx(5e-4));

  TrainConfig transfer;
  transfer.mode = TrainMode::Transfer;
  TrainConfig rt = transfer.resolved();
  CHECK(rt.warmup_steps == 1000);
  CHECK(rt.peak_lr == doctest::Approx(2e-4));
  CHECK(rt.dropout == doctest::Approx(0.3));
  CHECK(rt.attention_dropout == doctest::Approx(0.1));
  CHECK(rt.activation_dropout == doctest::Approx(0.1));

  TrainConfig overridden = transfer;
  overridden.warmup_steps = 50;
  overridden.dropout = 0.05;
  TrainConfig ro = overridden.resolved();
  CHECK(ro.warmup_steps == 50);
  CHECK(ro.dropout == doctest::Approx(0.05));
}

namespace {

struct ToyTask {
  SyntheticLanguageSpec spec;
  ParallelCorpus train, valid, held_out;
  Codec src, tgt;

  static ToyTask make() {
    ToyTask t;
    t.spec.base_vocab_size = 24;
    t.spec.reorder_window = 0;  // pure bijective relabeling
    t.spec.min_len = 3;
    t.spec.max_len = 6;
    t.spec.zipf_exponent = 0.5;  // flat enough that memorization cannot win
    t.train = gen_synthetic(t.spec, 1500, 100, SynLanguage::Child).corpus;
    t.valid = gen_synthetic(t.spec, 40, 101, SynLanguage::Child).corpus;
    t.held_out = gen_synthetic(t.spec, 50, 102, SynLanguage::Child).corpus;
    t.src.bpe = learn_bpe(count_words(t.train.source), 40);
    t.src.vocab = Vocabulary::build(t.train.source, t.src.bpe, Vocabulary::Role::Source);
    t.tgt.bpe = learn_bpe(count_words(t.train.target), 40);
    t.tgt.vocab = Vocabulary::build(t.train.target, t.tgt.bpe, Vocabulary::Role::Target);
    return t;
  }

  Model<float> fresh_model(uint64_t seed) const {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 32;
    cfg.ffn_dim = 64;
    cfg.heads = 4;
    cfg.max_positions = 32;
    return Model<float>::init(cfg, src.vocab.size(), tgt.vocab.size(), src.vocab.fingerprint(),
                              tgt.vocab.fingerprint(), seed);
  }

  TrainConfig quick_config() const {
    TrainConfig cfg;
    cfg.mode = TrainMode::Scratch;
    cfg.warmup_steps = 150;
    cfg.peak_lr = 6e-3;
    cfg.epochs = 25;
    cfg.max_tokens_per_batch = 400;
    cfg.dropout = 0.1;
    cfg.attention_dropout = 0.0;
    cfg.activation_dropout = 0.0;
    cfg.seed = 1;
    return cfg;
  }
};

}  // namespace

TEST_CASE("toy bijection task: convergence, determinism, and parent freezing") {
  ToyTask task = ToyTask::make();
  TrainData data;
  data.train = &task.train;
  data.valid = &task.valid;
  data.src_codec = &task.src;
  data.tgt_codec = &task.tgt;

  TrainResult run = train_child(task.fresh_model(1), data, task.quick_config());
  REQUIRE(run.log.epochs.size() == 25);

  // teacher-forced argmax accuracy on training pairs after convergence
  long correct = 0, total = 0;
  for (size_t i = 0; i < 60; ++i) {
    auto src_ids = task.src.encode(task.train.source[i]);
    auto tgt_ids = task.tgt.encode(task.train.target[i]);
    auto dist = run.best.forward_teacher(src_ids, tgt_ids, 1.0f);
    long v = run.best.tgt_vocab_size;
    for (size_t t = 0; t < tgt_ids.size(); ++t) {
      long arg = 0;
      for (long j = 1; j < v; ++j)
        if (dist.data()[static_cast<long>(t) * v + j] > dist.data()[static_cast<long>(t) * v + arg])
          arg = j;
      if (arg == tgt_ids[t]) ++correct;
      ++total;
    }
  }
  CHECK(double(correct) / double(total) >= 0.95);

  // greedy token-exact rate on held-out pairs
  long exact = 0, tokens = 0;
  for (size_t i = 0; i < task.held_out.size(); ++i) {
    auto src_ids = task.src.encode(task.held_out.source[i]);
    DecodeResult res = greedy_decode(run.best, src_ids, 20);
    std::string hyp = decode_ids(res.ids, task.tgt.vocab);
    auto hyp_words = split_whitespace(hyp);
    auto ref_words = split_whitespace(task.held_out.target[i]);
    auto labels = token_accuracy_labels(hyp_words, ref_words);
    for (uint8_t l : labels) exact += l;
    tokens += static_cast<long>(ref_words.size());
  }
  CHECK(double(exact) / double(tokens) >= 0.90);

  // same config + seed reproduces the trajectory bitwise
  TrainResult rerun = train_child(task.fresh_model(1), data, task.quick_config());
  for (const auto& name : run.best.params.names)
    CHECK(run.best.params.at(name).data() == rerun.best.params.at(name).data());
  REQUIRE(rerun.log.epochs.size() == run.log.epochs.size());
  for (size_t e = 0; e < run.log.epochs.size(); ++e) {
    CHECK(run.log.epochs[e].bleu == rerun.log.epochs[e].bleu);
    CHECK(run.log.epochs[e].nll == rerun.log.epochs[e].nll);
  }
}

TEST_CASE("consist training: alpha=0 reduces to the plain trainer, parent stays frozen") {
  ToyTask task = ToyTask::make();

  // A second system over the parent language acts as the fixed teacher.
  std::vector<std::string> parent_lines;
  for (size_t i = 0; i < task.train.size(); ++i) {
    // window 0: parent rendering is the deterministic relabeling of the base
    // sentence; reuse the child corpus targets as pseudo sources stand-in by
    // rendering through the parent lexicon is not available here, so this
    // test uses the target side itself as a pseudo source corpus.
    parent_lines.push_back(task.train.target[i]);
  }
  ParallelCorpus pseudo;
  for (size_t i = 0; i < task.train.size(); ++i)
    pseudo.push(parent_lines[i], task.train.target[i], Provenance::PseudoParent);

  Codec parent_src;
  parent_src.bpe = task.tgt.bpe;
  parent_src.vocab = task.tgt.vocab;
  parent_src.vocab.role = Vocabulary::Role::Source;

  ModelConfig pcfg;
  pcfg.layers = 2;
  pcfg.model_dim = 32;
  pcfg.ffn_dim = 64;
  pcfg.heads = 4;
  pcfg.max_positions = 32;
  Model<float> parent =
      Model<float>::init(pcfg, parent_src.vocab.size(), task.tgt.vocab.size(),
                         parent_src.vocab.fingerprint(), task.tgt.vocab.fingerprint(), 5);
  std::vector<float> parent_before;
  for (const auto& name : parent.params.names)
    for (float v : parent.params.at(name).data()) parent_before.push_back(v);

  TrainData plain;
  plain.train = &task.train;
  plain.valid = &task.valid;
  plain.src_codec = &task.src;
  plain.tgt_codec = &task.tgt;

  TrainData consist = plain;
  consist.pseudo = &pseudo;
  consist.parent = &parent;
  consist.parent_src_codec = &parent_src;

  TrainConfig cfg = task.quick_config();
  cfg.epochs = 2;

  TrainConfig zero_alpha = cfg;
  zero_alpha.consist = ConsistConfig{};
  zero_alpha.consist->alpha = 0.0;

  TrainResult base_run = train_child(task.fresh_model(2), plain, cfg);
  TrainResult zero_run = train_child(task.fresh_model(2), consist, zero_alpha);
  for (const auto& name : base_run.best.params.names)
    CHECK(base_run.best.params.at(name).data() == zero_run.best.params.at(name).data());

  TrainConfig with_consist = cfg;
  with_consist.consist = ConsistConfig{};
  with_consist.consist->alpha = 7.0;
  TrainResult consist_run = train_child(task.fresh_model(2), consist, with_consist);
  const double ln2 = std::log(2.0);
  for (const auto& rec : consist_run.log.epochs) {
    CHECK(rec.l_d >= 0.0);
    CHECK(rec.l_d <= ln2 + 1e-6);
  }

  // parent parameters bitwise identical before and after
  size_t k = 0;
  for (const auto& name : parent.params.names)
    for (float v : parent.params.at(name).data()) CHECK(v == parent_before[k++]);

  // consist with a missing pseudo corpus is a config error
  TrainConfig broken = with_consist;
  TrainData no_pseudo = plain;
  CHECK_THROWS_AS(train_child(task.fresh_model(2), no_pseudo, broken), ConfigError);
}

TEST_CASE("rdrop training runs and logs") {
  ToyTask task = ToyTask::make();
  TrainData data;
  data.train = &task.train;
  data.valid = &task.valid;
  data.src_codec = &task.src;
  data.tgt_codec = &task.tgt;
  TrainConfig cfg = task.quick_config();
  cfg.epochs = 2;
  cfg.rdrop_weight = 1.0;
  TrainResult run = train_child(task.fresh_model(3), data, cfg);
  CHECK(run.log.epochs.size() == 2);
  CHECK(run.best_bleu >= 0.0);
}

TEST_CASE("training log save/load round trip") {
  TrainingLog log;
  log.epochs.push_back({1, 12.3456, 2.345678, 0.123456, 0.0001, 3.2});
  log.epochs.push_back({2, 14.0, 2.0, 0.1, 0.0002, 3.1});
  log.save("/tmp/nmt_test_log.tsv");
  TrainingLog loaded = TrainingLog::load("/tmp/nmt_test_log.tsv");
  REQUIRE(loaded.epochs.size() == 2);
  CHECK(loaded.epochs[0].epoch == 1);
  CHECK(loaded.epochs[0].bleu == doctest::Approx(12.3456));
  CHECK(loaded.epochs[1].lr == doctest::Approx(0.0002));
}
