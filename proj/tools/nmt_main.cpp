// Experiment driver: synthetic data generation, BPE/vocabulary training,
// parent/child model training (with optional cross-model consistency and
// R-Drop), pseudo-source construction, back-translation, translation,
// evaluation, calibration, and log aggregation.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/corpus.hpp"
#include "nmt/decode.hpp"
#include "nmt/eval.hpp"
#include "nmt/train.hpp"
#include "nmt/transfer.hpp"

namespace fs = std::filesystem;
using namespace nmt;

namespace {

void require_readable(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is empty");
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

Codec load_codec(const std::string& bpe_path, const std::string& vocab_path,
                 Vocabulary::Role role) {
  require_readable(bpe_path, "BPE merge list");
  require_readable(vocab_path, "vocabulary");
  Codec c;
  c.bpe = BpeModel::load(bpe_path);
  c.vocab = Vocabulary::load(vocab_path, role);
  return c;
}

ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return ExperimentConfig::load(path);
}

struct DecodeFlags {
  std::string method;
  int beam = -1;
  double len_penalty = -1.0;
  int max_len = -1;
  int64_t seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--method", method, "decode method: greedy|beam|sample");
    cmd->add_option("--beam", beam, "beam width");
    cmd->add_option("--len-penalty", len_penalty, "length penalty exponent");
    cmd->add_option("--max-len", max_len, "maximum generated tokens");
    cmd->add_option("--decode-seed", seed, "sampling seed");
  }

  DecodeParams resolve(const ExperimentConfig& cfg) const {
    DecodeParams p = cfg.decode;
    if (!method.empty()) p.method = decode_method_from_name(method);
    if (beam > 0) p.beam = beam;
    if (len_penalty >= 0) p.len_penalty = len_penalty;
    if (max_len > 0) p.max_len = max_len;
    if (seed >= 0) p.seed = static_cast<uint64_t>(seed);
    return p;
  }
};

// ---------------------------------------------------------------------------

int cmd_datagen(const std::string& config_path, const std::string& out_dir, int64_t seed_flag) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : cfg.seed;
  const DataGenConfig& dg = cfg.datagen;
  fs::create_directories(out_dir);
  auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  SyntheticCorpus parent =
      gen_synthetic(dg.spec, dg.parent_pairs, mix_seed(seed, 1), SynLanguage::Parent);
  parent.corpus.save(path("parent.src"), path("parent.tgt"));

  SyntheticCorpus child =
      gen_synthetic(dg.spec, dg.child_pairs, mix_seed(seed, 2), SynLanguage::Child);
  child.corpus.save(path("child.src"), path("child.tgt"), path("child.prov"));
  // ground-truth parent renderings of the child sentences, for pseudo-source
  // fidelity checks
  std::vector<std::string> gt;
  gt.reserve(child.base_sentences.size());
  for (const auto& base : child.base_sentences)
    gt.push_back(render(dg.spec, SynLanguage::Parent, base));
  write_lines(path("child.gt_parent_src"), gt);

  gen_synthetic(dg.spec, dg.valid_pairs, mix_seed(seed, 3), SynLanguage::Child)
      .corpus.save(path("valid.src"), path("valid.tgt"));
  gen_synthetic(dg.spec, dg.test_pairs, mix_seed(seed, 4), SynLanguage::Child)
      .corpus.save(path("test.src"), path("test.tgt"));

  SyntheticCorpus mono =
      gen_synthetic(dg.spec, dg.mono_sentences, mix_seed(seed, 5), SynLanguage::Child);
  write_lines(path("mono.tgt"), mono.corpus.target);

  // parent-direction validation set, used when training the parent models
  gen_synthetic(dg.spec, dg.valid_pairs, mix_seed(seed, 6), SynLanguage::Parent)
      .corpus.save(path("parent_valid.src"), path("parent_valid.tgt"));
  std::cout << "datagen: wrote " << dg.parent_pairs << " parent / " << dg.child_pairs
            << " child pairs to " << out_dir << "\n";
  return 0;
}

int cmd_bpe_train(const std::vector<std::string>& inputs, int merges, const std::string& out) {
  if (merges < 0) throw ConfigError("bpe-train: --merges must be >= 0");
  std::vector<std::string> lines;
  for (const auto& in : inputs) {
    require_readable(in, "input corpus");
    auto l = read_lines(in);
    lines.insert(lines.end(), l.begin(), l.end());
  }
  BpeModel model = learn_bpe(count_words(lines), merges);
  model.save(out);
  std::cout << "bpe-train: learned " << model.merges.size() << " merges -> " << out << "\n";
  return 0;
}

int cmd_build_vocab(const std::vector<std::string>& inputs, const std::string& model_path,
                    const std::string& out) {
  require_readable(model_path, "BPE merge list");
  BpeModel model = BpeModel::load(model_path);
  std::vector<std::string> lines;
  for (const auto& in : inputs) {
    require_readable(in, "input corpus");
    auto l = read_lines(in);
    lines.insert(lines.end(), l.begin(), l.end());
  }
  Vocabulary vocab = Vocabulary::build(lines, model, Vocabulary::Role::Source);
  vocab.save(out);
  std::cout << "build-vocab: " << vocab.size() << " tokens -> " << out << "\n";
  return 0;
}

int cmd_filter(const std::string& src, const std::string& tgt, const std::string& prov,
               const std::string& out_src, const std::string& out_tgt,
               const std::string& out_prov, long max_len, double max_ratio, double sample_ratio,
               int64_t seed) {
  require_readable(src, "source corpus");
  require_readable(tgt, "target corpus");
  ParallelCorpus corpus = ParallelCorpus::load(src, tgt, prov);
  ParallelCorpus kept = filter_pairs(corpus, max_len, max_ratio);
  if (sample_ratio < 1.0)
    kept = sample_pairs(kept, sample_ratio, seed >= 0 ? static_cast<uint64_t>(seed) : 0);
  kept.save(out_src, out_tgt, out_prov);
  std::cout << "filter: kept " << kept.size() << " of " << corpus.size() << " pairs\n";
  return 0;
}

struct TrainIo {
  std::string config_path;
  std::string src, tgt, valid_src, valid_tgt;
  std::string src_bpe, src_vocab, tgt_bpe, tgt_vocab;
  std::string init_ckpt;
  bool scratch = false;
  std::string pseudo_src, parent_ckpt, parent_src_bpe, parent_src_vocab;
  std::string out_ckpt, out_log;
  int64_t seed = -1;

  void attach_common(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)");
    cmd->add_option("--src", src, "training source corpus")->required();
    cmd->add_option("--tgt", tgt, "training target corpus")->required();
    cmd->add_option("--valid-src", valid_src, "validation source corpus")->required();
    cmd->add_option("--valid-tgt", valid_tgt, "validation target corpus")->required();
    cmd->add_option("--src-bpe", src_bpe, "source-side BPE merges")->required();
    cmd->add_option("--src-vocab", src_vocab, "source-side vocabulary")->required();
    cmd->add_option("--tgt-bpe", tgt_bpe, "target-side BPE merges")->required();
    cmd->add_option("--tgt-vocab", tgt_vocab, "target-side vocabulary")->required();
    cmd->add_option("--out", out_ckpt, "output checkpoint path")->required();
    cmd->add_option("--log", out_log, "training log path")->required();
    cmd->add_option("--seed", seed, "seed override");
  }
};

int run_training(const TrainIo& io, TrainMode mode, bool allow_consist) {
  ExperimentConfig cfg = load_config_or_default(io.config_path);
  TrainConfig train_cfg = cfg.train;
  train_cfg.mode = mode;
  train_cfg.seed = io.seed >= 0 ? static_cast<uint64_t>(io.seed) : cfg.seed;
  if (allow_consist) {
    train_cfg.consist = cfg.consist;
    train_cfg.rdrop_weight = cfg.rdrop_weight;
  } else {
    train_cfg.consist.reset();
    train_cfg.rdrop_weight.reset();
  }

  require_readable(io.src, "training source corpus");
  require_readable(io.tgt, "training target corpus");
  require_readable(io.valid_src, "validation source corpus");
  require_readable(io.valid_tgt, "validation target corpus");

  Codec src_codec = load_codec(io.src_bpe, io.src_vocab, Vocabulary::Role::Source);
  Codec tgt_codec = load_codec(io.tgt_bpe, io.tgt_vocab, Vocabulary::Role::Target);
  ParallelCorpus train_corpus = ParallelCorpus::load(io.src, io.tgt);
  ParallelCorpus valid_corpus = ParallelCorpus::load(io.valid_src, io.valid_tgt);

  Model<float> init_model;
  if (io.scratch || io.init_ckpt.empty()) {
    init_model = Model<float>::init(cfg.model, src_codec.vocab.size(), tgt_codec.vocab.size(),
                                    src_codec.vocab.fingerprint(), tgt_codec.vocab.fingerprint(),
                                    train_cfg.seed);
  } else {
    require_readable(io.init_ckpt, "initial checkpoint");
    init_model = load_checkpoint(io.init_ckpt);
    if (init_model.src_vocab_fp != src_codec.vocab.fingerprint() ||
        init_model.tgt_vocab_fp != tgt_codec.vocab.fingerprint())
      throw ConfigError(
          "train: checkpoint vocabulary fingerprints do not match the supplied vocabularies");
  }

  TrainData data;
  data.train = &train_corpus;
  data.valid = &valid_corpus;
  data.src_codec = &src_codec;
  data.tgt_codec = &tgt_codec;

  ParallelCorpus pseudo_corpus;
  Model<float> parent_model;
  Codec parent_codec;
  if (train_cfg.consist.has_value()) {
    if (io.pseudo_src.empty())
      throw ConfigError("train-child: consist is enabled but --pseudo-src is missing");
    if (io.parent_ckpt.empty())
      throw ConfigError("train-child: consist is enabled but --parent is missing");
    if (io.parent_src_bpe.empty() || io.parent_src_vocab.empty())
      throw ConfigError(
          "train-child: consist is enabled but --parent-src-bpe/--parent-src-vocab is missing");
    require_readable(io.pseudo_src, "pseudo source corpus");
    require_readable(io.parent_ckpt, "parent checkpoint");
    pseudo_corpus = ParallelCorpus::load(io.pseudo_src, io.tgt);
    for (auto& p : pseudo_corpus.provenance) p = Provenance::PseudoParent;
    parent_model = load_checkpoint(io.parent_ckpt);
    parent_codec = load_codec(io.parent_src_bpe, io.parent_src_vocab, Vocabulary::Role::Source);
    data.pseudo = &pseudo_corpus;
    data.parent = &parent_model;
    data.parent_src_codec = &parent_codec;
  }

  TrainResult result = train_child(init_model, data, train_cfg);
  save_checkpoint(result.best, io.out_ckpt);
  result.log.save(io.out_log);
  std::cout << "train: best validation BLEU " << result.best_bleu << " at epoch "
            << result.best_epoch << " -> " << io.out_ckpt << "\n";
  return 0;
}

int cmd_transfer_init(const std::string& method, const std::string& config_path,
                      const std::string& parent_path, const std::string& parent_src_vocab_path,
                      const std::string& child_src_vocab_path, const std::string& tgt_vocab_path,
                      const std::string& out, const std::string& report_path, int64_t seed_flag) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  uint64_t seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : cfg.seed;
  require_readable(parent_path, "parent checkpoint");
  require_readable(child_src_vocab_path, "child source vocabulary");
  require_readable(tgt_vocab_path, "target vocabulary");
  Model<float> parent = load_checkpoint(parent_path);
  Vocabulary child_src = Vocabulary::load(child_src_vocab_path, Vocabulary::Role::Source);
  Vocabulary tgt = Vocabulary::load(tgt_vocab_path, Vocabulary::Role::Target);

  std::pair<Model<float>, TransferReport> result = [&] {
    if (method == "tl") return tl_init(parent, cfg.model, child_src, tgt, seed);
    if (method == "tm") {
      require_readable(parent_src_vocab_path, "parent source vocabulary");
      Vocabulary parent_src = Vocabulary::load(parent_src_vocab_path, Vocabulary::Role::Source);
      return tm_init(parent, cfg.model, parent_src, child_src, tgt, seed);
    }
    throw ConfigError("transfer-init: unknown method '" + method + "' (expected tl or tm)");
  }();

  save_checkpoint(result.first, out);
  if (!report_path.empty()) result.second.save(report_path);
  std::cout << "transfer-init " << method << ": matched " << result.second.matched << ", random "
            << result.second.randomly_initialized << " -> " << out << "\n";
  return 0;
}

int cmd_make_pseudo(const std::string& config_path, const std::string& model_path,
                    const std::string& tgt_path, const std::string& model_src_bpe,
                    const std::string& model_src_vocab, const std::string& model_tgt_vocab,
                    const std::string& out, const DecodeFlags& flags) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  require_readable(model_path, "reversed parent checkpoint");
  require_readable(tgt_path, "target corpus");
  Model<float> model = load_checkpoint(model_path);
  Codec src_codec = load_codec(model_src_bpe, model_src_vocab, Vocabulary::Role::Source);
  require_readable(model_tgt_vocab, "model target vocabulary");
  Vocabulary tgt_vocab = Vocabulary::load(model_tgt_vocab, Vocabulary::Role::Target);

  ParallelCorpus child;
  child.target = read_lines(tgt_path);
  child.source.assign(child.target.size(), "");
  child.provenance.assign(child.target.size(), Provenance::Real);

  Translator tr{&model, &src_codec, &tgt_vocab};
  ParallelCorpus pseudo = make_pseudo_parent(child, tr, flags.resolve(cfg), env_thread_count());
  write_lines(out, pseudo.source);
  std::cout << "make-pseudo: wrote " << pseudo.size() << " pseudo sources -> " << out << "\n";
  return 0;
}

int cmd_augment_bt(const std::string& config_path, const std::string& src, const std::string& tgt,
                   const std::string& mono, const std::string& model_path,
                   const std::string& model_src_bpe, const std::string& model_src_vocab,
                   const std::string& model_tgt_vocab, const std::string& out_src,
                   const std::string& out_tgt, const std::string& out_prov,
                   const DecodeFlags& flags) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  require_readable(src, "source corpus");
  require_readable(tgt, "target corpus");
  require_readable(mono, "monolingual target corpus");
  require_readable(model_path, "reversed child checkpoint");
  ParallelCorpus child = ParallelCorpus::load(src, tgt);
  std::vector<std::string> mono_lines = read_lines(mono);
  Model<float> model = load_checkpoint(model_path);
  Codec src_codec = load_codec(model_src_bpe, model_src_vocab, Vocabulary::Role::Source);
  Vocabulary tgt_vocab = Vocabulary::load(model_tgt_vocab, Vocabulary::Role::Target);
  Translator tr{&model, &src_codec, &tgt_vocab};
  ParallelCorpus augmented =
      augment_back_translation(child, mono_lines, tr, flags.resolve(cfg), env_thread_count());
  augmented.save(out_src, out_tgt, out_prov);
  std::cout << "augment-bt: " << child.size() << " real + " << (augmented.size() - child.size())
            << " back-translated pairs -> " << out_src << "\n";
  return 0;
}

int cmd_translate(const std::string& config_path, const std::string& model_path,
                  const std::string& input, const std::string& output, const std::string& src_bpe,
                  const std::string& src_vocab, const std::string& tgt_vocab,
                  const DecodeFlags& flags) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  require_readable(model_path, "checkpoint");
  require_readable(input, "input file");
  Model<float> model = load_checkpoint(model_path);
  Codec src_codec = load_codec(src_bpe, src_vocab, Vocabulary::Role::Source);
  require_readable(tgt_vocab, "target vocabulary");
  Vocabulary tv = Vocabulary::load(tgt_vocab, Vocabulary::Role::Target);
  Translator tr{&model, &src_codec, &tv};
  std::vector<std::string> out =
      translate_corpus(tr, read_lines(input), flags.resolve(cfg), env_thread_count());
  write_lines(output, out);
  std::cout << "translate: " << out.size() << " sentences -> " << output << "\n";
  return 0;
}

int cmd_evaluate(const std::string& hyp, const std::string& ref) {
  require_readable(hyp, "hypothesis file");
  require_readable(ref, "reference file");
  double score = bleu(read_lines(hyp), read_lines(ref));
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << "BLEU = " << score;
  std::cout << out.str() << "\n";
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& model_path,
                  const std::string& src, const std::string& ref, const std::string& src_bpe,
                  const std::string& src_vocab, const std::string& tgt_bpe,
                  const std::string& tgt_vocab, const std::string& out, const DecodeFlags& flags) {
  ExperimentConfig cfg = load_config_or_default(config_path);
  require_readable(model_path, "checkpoint");
  Model<float> model = load_checkpoint(model_path);
  Codec src_codec = load_codec(src_bpe, src_vocab, Vocabulary::Role::Source);
  Codec tgt_codec = load_codec(tgt_bpe, tgt_vocab, Vocabulary::Role::Target);
  ParallelCorpus test = ParallelCorpus::load(src, ref);
  Translator tr{&model, &src_codec, &tgt_codec.vocab};
  CalibrationReport rep =
      calibration_report(tr, tgt_codec, test, flags.resolve(cfg), env_thread_count());
  rep.save(out);
  std::cout << "calibrate: confidence " << rep.mean_confidence << ", accuracy "
            << rep.token_accuracy << ", gap " << rep.gap << " -> " << out << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  if (runs.empty()) throw ConfigError("report: at least one --run NAME=LOG is required");
  std::vector<std::pair<std::string, TrainingLog>> logs;
  for (const auto& spec : runs) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("report: --run expects NAME=LOGPATH, got '" + spec + "'");
    std::string name = spec.substr(0, eq);
    std::string path = spec.substr(eq + 1);
    require_readable(path, "training log");
    logs.emplace_back(name, TrainingLog::load(path));
  }

  std::ostringstream table;
  table.setf(std::ios::fixed);
  table << "# learning curves (validation BLEU per epoch)\n";
  table << "epoch";
  for (const auto& [name, log] : logs) table << '\t' << name;
  table << '\n';
  size_t max_epochs = 0;
  for (const auto& [name, log] : logs) max_epochs = std::max(max_epochs, log.epochs.size());
  table.precision(2);
  for (size_t e = 0; e < max_epochs; ++e) {
    table << (e + 1);
    for (const auto& [name, log] : logs) {
      table << '\t';
      if (e < log.epochs.size())
        table << log.epochs[e].bleu;
      else
        table << "-";
    }
    table << '\n';
  }
  table << "# summary\n";
  table << "run\tbest_bleu\tbest_epoch\tfinal_nll\tfinal_l_d\n";
  for (const auto& [name, log] : logs) {
    double best = -1.0;
    long best_epoch = 0;
    for (const auto& rec : log.epochs)
      if (rec.bleu > best) {
        best = rec.bleu;
        best_epoch = rec.epoch;
      }
    table.precision(2);
    table << name << '\t' << best << '\t' << best_epoch << '\t';
    table.precision(4);
    table << (log.epochs.empty() ? 0.0 : log.epochs.back().nll) << '\t'
          << (log.epochs.empty() ? 0.0 : log.epochs.back().l_d) << '\n';
  }

  if (out.empty() || out == "-") {
    std::cout << table.str();
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write report: " + out);
    f << table.str();
    std::cout << "report: " << logs.size() << " runs -> " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale NMT with continuous parent-to-child consistency transfer"};
  app.require_subcommand(1);

  auto* datagen = app.add_subcommand("datagen", "generate the synthetic bilingual testbed");
  std::string dg_config, dg_out;
  int64_t dg_seed = -1;
  datagen->add_option("--config", dg_config, "experiment config (JSON)");
  datagen->add_option("--out", dg_out, "output directory")->required();
  datagen->add_option("--seed", dg_seed, "seed override");

  auto* bpe_train = app.add_subcommand("bpe-train", "learn BPE merges from corpora");
  std::vector<std::string> bt_inputs;
  int bt_merges = 0;
  std::string bt_out;
  bpe_train->add_option("--input", bt_inputs, "input corpus (repeatable)")->required();
  bpe_train->add_option("--merges", bt_merges, "merge count")->required();
  bpe_train->add_option("--out", bt_out, "output merge list")->required();

  auto* build_vocab = app.add_subcommand("build-vocab", "build a vocabulary from BPE output");
  std::vector<std::string> bv_inputs;
  std::string bv_model, bv_out;
  build_vocab->add_option("--input", bv_inputs, "input corpus (repeatable)")->required();
  build_vocab->add_option("--bpe", bv_model, "BPE merge list")->required();
  build_vocab->add_option("--out", bv_out, "output vocabulary")->required();

  auto* filter = app.add_subcommand("filter", "length/ratio filtering and seeded subsampling");
  std::string f_src, f_tgt, f_prov, f_out_src, f_out_tgt, f_out_prov;
  long f_max_len = 60;
  double f_max_ratio = 1.5, f_sample_ratio = 1.0;
  int64_t f_seed = -1;
  filter->add_option("--src", f_src)->required();
  filter->add_option("--tgt", f_tgt)->required();
  filter->add_option("--prov", f_prov, "provenance sidecar");
  filter->add_option("--out-src", f_out_src)->required();
  filter->add_option("--out-tgt", f_out_tgt)->required();
  filter->add_option("--out-prov", f_out_prov);
  filter->add_option("--max-len", f_max_len, "max words per side");
  filter->add_option("--max-ratio", f_max_ratio, "max length ratio");
  filter->add_option("--sample-ratio", f_sample_ratio, "seeded subsample ratio");
  filter->add_option("--seed", f_seed, "subsample seed");

  TrainIo parent_io, reversed_io, child_io;
  auto* train_parent = app.add_subcommand("train-parent", "train the parent model from scratch");
  parent_io.attach_common(train_parent);
  auto* train_reversed =
      app.add_subcommand("train-reversed", "train a reversed (target-to-source) model");
  reversed_io.attach_common(train_reversed);
  auto* train_child_cmd = app.add_subcommand("train-child", "train the child model");
  child_io.attach_common(train_child_cmd);
  train_child_cmd->add_option("--init", child_io.init_ckpt, "initial checkpoint (transfer)");
  train_child_cmd->add_flag("--scratch", child_io.scratch, "random initialization (vanilla)");
  train_child_cmd->add_option("--pseudo-src", child_io.pseudo_src,
                              "pseudo parent source corpus (consist)");
  train_child_cmd->add_option("--parent", child_io.parent_ckpt, "parent checkpoint (consist)");
  train_child_cmd->add_option("--parent-src-bpe", child_io.parent_src_bpe);
  train_child_cmd->add_option("--parent-src-vocab", child_io.parent_src_vocab);

  auto* transfer =
      app.add_subcommand("transfer-init", "initialize a child checkpoint from the parent");
  std::string ti_method, ti_config, ti_parent, ti_parent_vocab, ti_child_vocab, ti_tgt_vocab,
      ti_out, ti_report;
  int64_t ti_seed = -1;
  transfer->add_option("method", ti_method, "tl or tm")->required();
  transfer->add_option("--config", ti_config);
  transfer->add_option("--parent", ti_parent)->required();
  transfer->add_option("--parent-src-vocab", ti_parent_vocab);
  transfer->add_option("--child-src-vocab", ti_child_vocab)->required();
  transfer->add_option("--tgt-vocab", ti_tgt_vocab)->required();
  transfer->add_option("--out", ti_out)->required();
  transfer->add_option("--report", ti_report, "transfer report path");
  transfer->add_option("--seed", ti_seed, "seed override");

  auto* make_pseudo =
      app.add_subcommand("make-pseudo", "back-translate child targets into pseudo parent sources");
  std::string mp_config, mp_model, mp_tgt, mp_src_bpe, mp_src_vocab, mp_tgt_vocab, mp_out;
  DecodeFlags mp_flags;
  make_pseudo->add_option("--config", mp_config);
  make_pseudo->add_option("--model", mp_model, "reversed parent checkpoint")->required();
  make_pseudo->add_option("--tgt", mp_tgt, "child target corpus")->required();
  make_pseudo->add_option("--model-src-bpe", mp_src_bpe)->required();
  make_pseudo->add_option("--model-src-vocab", mp_src_vocab)->required();
  make_pseudo->add_option("--model-tgt-vocab", mp_tgt_vocab)->required();
  make_pseudo->add_option("--out", mp_out, "pseudo source output")->required();
  mp_flags.attach(make_pseudo);

  auto* augment = app.add_subcommand("augment-bt", "append back-translated monolingual pairs");
  std::string ab_config, ab_src, ab_tgt, ab_mono, ab_model, ab_src_bpe, ab_src_vocab, ab_tgt_vocab,
      ab_out_src, ab_out_tgt, ab_out_prov;
  DecodeFlags ab_flags;
  augment->add_option("--config", ab_config);
  augment->add_option("--src", ab_src)->required();
  augment->add_option("--tgt", ab_tgt)->required();
  augment->add_option("--mono", ab_mono, "monolingual target sentences")->required();
  augment->add_option("--model", ab_model, "reversed child checkpoint")->required();
  augment->add_option("--model-src-bpe", ab_src_bpe)->required();
  augment->add_option("--model-src-vocab", ab_src_vocab)->required();
  augment->add_option("--model-tgt-vocab", ab_tgt_vocab)->required();
  augment->add_option("--out-src", ab_out_src)->required();
  augment->add_option("--out-tgt", ab_out_tgt)->required();
  augment->add_option("--out-prov", ab_out_prov);
  ab_flags.attach(augment);

  auto* translate = app.add_subcommand("translate", "translate a file of sentences");
  std::string tr_config, tr_model, tr_in, tr_out, tr_src_bpe, tr_src_vocab, tr_tgt_vocab;
  DecodeFlags tr_flags;
  translate->add_option("--config", tr_config);
  translate->add_option("--model", tr_model)->required();
  translate->add_option("--input", tr_in)->required();
  translate->add_option("--output", tr_out)->required();
  translate->add_option("--src-bpe", tr_src_bpe)->required();
  translate->add_option("--src-vocab", tr_src_vocab)->required();
  translate->add_option("--tgt-vocab", tr_tgt_vocab)->required();
  tr_flags.attach(translate);

  auto* evaluate = app.add_subcommand("evaluate", "corpus BLEU of hypotheses vs references");
  std::string ev_hyp, ev_ref;
  evaluate->add_option("--hyp", ev_hyp)->required();
  evaluate->add_option("--ref", ev_ref)->required();

  auto* calibrate = app.add_subcommand("calibrate", "confidence vs token-accuracy report");
  std::string ca_config, ca_model, ca_src, ca_ref, ca_src_bpe, ca_src_vocab, ca_tgt_bpe,
      ca_tgt_vocab, ca_out;
  DecodeFlags ca_flags;
  calibrate->add_option("--config", ca_config);
  calibrate->add_option("--model", ca_model)->required();
  calibrate->add_option("--src", ca_src)->required();
  calibrate->add_option("--ref", ca_ref)->required();
  calibrate->add_option("--src-bpe", ca_src_bpe)->required();
  calibrate->add_option("--src-vocab", ca_src_vocab)->required();
  calibrate->add_option("--tgt-bpe", ca_tgt_bpe)->required();
  calibrate->add_option("--tgt-vocab", ca_tgt_vocab)->required();
  calibrate->add_option("--out", ca_out)->required();
  ca_flags.attach(calibrate);

  auto* report = app.add_subcommand("report", "aggregate training logs into tables");
  std::vector<std::string> rp_runs;
  std::string rp_out;
  report->add_option("--run", rp_runs, "NAME=LOGPATH (repeatable)")->required();
  report->add_option("--out", rp_out, "output table path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*datagen) return cmd_datagen(dg_config, dg_out, dg_seed);
    if (*bpe_train) return cmd_bpe_train(bt_inputs, bt_merges, bt_out);
    if (*build_vocab) return cmd_build_vocab(bv_inputs, bv_model, bv_out);
    if (*filter)
      return cmd_filter(f_src, f_tgt, f_prov, f_out_src, f_out_tgt, f_out_prov, f_max_len,
                        f_max_ratio, f_sample_ratio, f_seed);
    if (*train_parent) return run_training(parent_io, TrainMode::Parent, false);
    if (*train_reversed) return run_training(reversed_io, TrainMode::Parent, false);
    if (*train_child_cmd)
      return run_training(child_io, child_io.scratch ? TrainMode::Scratch : TrainMode::Transfer,
                          true);
    if (*transfer)
      return cmd_transfer_init(ti_method, ti_config, ti_parent, ti_parent_vocab, ti_child_vocab,
                               ti_tgt_vocab, ti_out, ti_report, ti_seed);
    if (*make_pseudo)
      return cmd_make_pseudo(mp_config, mp_model, mp_tgt, mp_src_bpe, mp_src_vocab, mp_tgt_vocab,
                             mp_out, mp_flags);
    if (*augment)
      return cmd_augment_bt(ab_config, ab_src, ab_tgt, ab_mono, ab_model, ab_src_bpe, ab_src_vocab,
                            ab_tgt_vocab, ab_out_src, ab_out_tgt, ab_out_prov, ab_flags);
    if (*translate)
      return cmd_translate(tr_config, tr_model, tr_in, tr_out, tr_src_bpe, tr_src_vocab,
                           tr_tgt_vocab, tr_flags);
    if (*evaluate) return cmd_evaluate(ev_hyp, ev_ref);
    if (*calibrate)
      return cmd_calibrate(ca_config, ca_model, ca_src, ca_ref, ca_src_bpe, ca_src_vocab,
                           ca_tgt_bpe, ca_tgt_vocab, ca_out, ca_flags);
    if (*report) return cmd_report(rp_runs, rp_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
