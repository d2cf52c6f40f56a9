#include "nmt/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "nmt/decode.hpp"
#include "nmt/eval.hpp"

namespace nmt {

TrainMode train_mode_from_name(const std::string& s) {
  if (s == "parent") return TrainMode::Parent;
  if (s == "scratch") return TrainMode::Scratch;
  if (s == "transfer") return TrainMode::Transfer;
  throw ValueError("unknown train mode '" + s + "' (expected parent, scratch or transfer)");
}

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Parent: return "parent";
    case TrainMode::Scratch: return "scratch";
    default: return "transfer";
  }
}

TrainConfig TrainConfig::resolved() const {
  TrainConfig c = *this;
  if (c.warmup_steps < 0)
    c.warmup_steps = mode == TrainMode::Parent ? 10000 : (mode == TrainMode::Scratch ? 8000 : 1000);
  if (c.peak_lr < 0)
    c.peak_lr = mode == TrainMode::Parent ? 1e-3 : (mode == TrainMode::Scratch ? 5e-4 : 2e-4);
  if (c.dropout < 0) c.dropout = mode == TrainMode::Parent ? 0.1 : 0.3;
  if (c.attention_dropout < 0) c.attention_dropout = mode == TrainMode::Parent ? 0.0 : 0.1;
  if (c.activation_dropout < 0) c.activation_dropout = mode == TrainMode::Parent ? 0.0 : 0.1;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValueError("train: epochs must be >= 1");
  if (max_tokens_per_batch < 1) throw ValueError("train: max_tokens_per_batch must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ValueError("train: label_smoothing must be in [0,1)");
  if (clip_norm < 0.0) throw ValueError("train: clip_norm must be >= 0");
  if (consist) consist->validate();
  if (rdrop_weight && *rdrop_weight < 0.0) throw ValueError("train: rdrop weight must be >= 0");
}

double lr_at(long step, long warmup, double peak) {
  if (step < 1) throw ValueError("lr_at: step must be >= 1");
  if (warmup < 1) return peak * std::sqrt(1.0 / double(step));
  double ramp = double(step) / double(warmup);
  double decay = std::sqrt(double(warmup) / double(step));
  return peak * std::min(ramp, decay);
}

void Adam::step(ParamStore<float>& params, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, double(t_));
  double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (const auto& name : params.names) {
    auto& p = params.at(name);
    const auto& g = p.grad();
    for (float gv : g)
      if (!std::isfinite(gv))
        throw NumericError("adam: non-finite gradient in parameter '" + name + "' at step " +
                           std::to_string(t_));
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0f);
      v.assign(g.size(), 0.0f);
    }
    auto& val = p.data();
    const float b1 = float(beta1_), b2 = float(beta2_);
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      float mhat = m[i] / float(bc1);
      float vhat = v[i] / float(bc2);
      val[i] -= float(lr) * mhat / (std::sqrt(vhat) + float(eps_));
    }
  }
}

void TrainingLog::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "epoch\tbleu\tnll\tl_d\tlr\tseconds\n";
  out.setf(std::ios::fixed);
  for (const auto& e : epochs) {
    out.precision(4);
    out << e.epoch << '\t' << e.bleu << '\t';
    out.precision(6);
    out << e.nll << '\t' << e.l_d << '\t';
    out.precision(8);
    out << e.lr << '\t';
    out.precision(3);
    out << e.seconds << '\n';
  }
}

TrainingLog TrainingLog::load(const std::string& path) {
  TrainingLog log;
  auto lines = read_lines(path);
  for (size_t i = 1; i < lines.size(); ++i) {  // skip header
    if (lines[i].empty()) continue;
    std::istringstream in(lines[i]);
    EpochRecord r;
    if (!(in >> r.epoch >> r.bleu >> r.nll >> r.l_d >> r.lr >> r.seconds))
      throw IoError("malformed training log line " + std::to_string(i + 1) + " in " + path);
    log.epochs.push_back(r);
  }
  return log;
}

namespace {

struct Instance {
  std::vector<int> src;
  std::vector<int> tgt;     // eos-terminated
  std::vector<int> pseudo;  // empty unless consist
};

struct Batch {
  std::vector<size_t> items;  // indices into the instance list
  long tgt_tokens = 0;
};

// Token-budget batching over instances grouped by exact length signature,
// so every batch is rectangular and needs no padding.
std::vector<Batch> build_batches(const std::vector<Instance>& instances, long max_tokens) {
  std::map<std::tuple<size_t, size_t, size_t>, std::vector<size_t>> groups;
  for (size_t i = 0; i < instances.size(); ++i)
    groups[{instances[i].src.size(), instances[i].tgt.size(), instances[i].pseudo.size()}]
        .push_back(i);
  std::vector<Batch> batches;
  for (auto& [key, idxs] : groups) {
    long tgt_len = static_cast<long>(std::get<1>(key));
    Batch cur;
    for (size_t idx : idxs) {
      if (!cur.items.empty() && cur.tgt_tokens + tgt_len > max_tokens) {
        batches.push_back(std::move(cur));
        cur = Batch{};
      }
      cur.items.push_back(idx);
      cur.tgt_tokens += tgt_len;
    }
    if (!cur.items.empty()) batches.push_back(std::move(cur));
  }
  return batches;
}

double grad_global_norm(ParamStore<float>& params) {
  double sq = 0.0;
  for (const auto& name : params.names)
    for (float g : params.at(name).grad()) sq += double(g) * double(g);
  return std::sqrt(sq);
}

void scale_grads(ParamStore<float>& params, float factor) {
  for (const auto& name : params.names)
    for (auto& g : params.at(name).grad()) g *= factor;
}

}  // namespace

TrainResult train_child(const Model<float>& init, const TrainData& data, const TrainConfig& raw_cfg) {
  TrainConfig cfg = raw_cfg.resolved();
  cfg.validate();
  if (data.train == nullptr || data.valid == nullptr || data.src_codec == nullptr ||
      data.tgt_codec == nullptr)
    throw ValueError("train: train/valid corpora and codecs are required");

  const bool consist_on = cfg.consist.has_value() && cfg.consist->alpha > 0.0;
  if (cfg.consist.has_value()) {
    if (data.pseudo == nullptr)
      throw ConfigError("train: consist enabled but no pseudo corpus given (pseudo_src)");
    if (data.parent == nullptr)
      throw ConfigError("train: consist enabled but no parent checkpoint given (parent)");
    if (data.parent_src_codec == nullptr)
      throw ConfigError("train: consist enabled but no parent source codec given");
    if (data.pseudo->size() != data.train->size())
      throw ValueError("train: pseudo corpus (" + std::to_string(data.pseudo->size()) +
                       " pairs) is not order-aligned with the training data (" +
                       std::to_string(data.train->size()) + ")");
    for (size_t i = 0; i < data.train->size(); ++i)
      if (data.pseudo->target[i] != data.train->target[i])
        throw ValueError("train: pseudo corpus target differs from training target at line " +
                         std::to_string(i + 1));
    if (data.parent->tgt_vocab_fp != init.tgt_vocab_fp)
      throw ValueError("train: parent and child target vocabularies differ (fingerprint "
                       "mismatch); consist training requires the shared target vocabulary");
  }
  const bool rdrop_on = cfg.rdrop_weight.has_value() && *cfg.rdrop_weight > 0.0;

  // Working copy; dropout rates come from the train config.
  Model<float> model = init.clone_values();
  model.cfg.dropout = cfg.dropout;
  model.cfg.attention_dropout = cfg.attention_dropout;
  model.cfg.activation_dropout = cfg.activation_dropout;
  model.params.set_requires_grad(true);

  // Snapshot of parent parameters; verified unchanged at the end.
  std::vector<float> parent_fingerprint_before;
  if (consist_on)
    for (const auto& name : data.parent->params.names)
      for (float v : data.parent->params.at(name).data()) parent_fingerprint_before.push_back(v);

  // Encode all instances once.
  std::vector<Instance> instances(data.train->size());
  for (size_t i = 0; i < data.train->size(); ++i) {
    instances[i].src = data.src_codec->encode(data.train->source[i]);
    instances[i].tgt = data.tgt_codec->encode(data.train->target[i]);
    if (instances[i].src.empty()) instances[i].src.push_back(Vocabulary::kUnk);
    if (consist_on) {
      instances[i].pseudo = data.parent_src_codec->encode(data.pseudo->source[i]);
      if (instances[i].pseudo.empty()) instances[i].pseudo.push_back(Vocabulary::kUnk);
    }
  }

  // The parent is a fixed teacher with dropout disabled, so its per-position
  // distributions are constant across epochs; compute them once.
  std::vector<std::vector<float>> parent_rows(consist_on ? instances.size() : 0);
  if (consist_on) {
    const double tau = cfg.consist->tau;
    for (size_t i = 0; i < instances.size(); ++i) {
      Tensor<float> dist =
          data.parent->forward_teacher(instances[i].pseudo, instances[i].tgt, float(tau), nullptr);
      parent_rows[i] = dist.data();
    }
  }

  std::vector<Batch> batches = build_batches(instances, cfg.max_tokens_per_batch);
  std::vector<std::vector<int>> valid_src(data.valid->size());
  for (size_t i = 0; i < data.valid->size(); ++i) {
    valid_src[i] = data.src_codec->encode(data.valid->source[i]);
    if (valid_src[i].empty()) valid_src[i].push_back(Vocabulary::kUnk);
  }

  Adam opt;
  Rng dropout_rng(mix_seed(cfg.seed, 0xD20));
  long step = 0;
  TrainResult result;
  result.best = model.clone_values();
  result.best_bleu = -1.0;

  const long vocab = model.tgt_vocab_size;
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto epoch_start = std::chrono::steady_clock::now();
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE90 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double nll_sum = 0.0, ld_sum = 0.0;
    long token_sum = 0;
    double last_lr = 0.0;
    for (size_t bi : order) {
      const Batch& b = batches[bi];
      IdBatch id_batch;
      std::vector<int> targets_flat;
      for (size_t idx : b.items) {
        id_batch.src.push_back(instances[idx].src);
        id_batch.tgt.push_back(instances[idx].tgt);
        for (int t : instances[idx].tgt) targets_flat.push_back(t);
      }

      Tape<float> tape;
      TapeScope<float> scope(tape);
      Tensor<float> logits = model.forward_logits(id_batch, &dropout_rng);
      Tensor<float> probs = softmax_t(logits, 1.0f);
      Tensor<float> nll = nll_loss(probs, targets_flat, {}, cfg.label_smoothing);
      Tensor<float> rdrop_term;

      if (rdrop_on) {
        // Second forward with fresh dropout draws; both views contribute to
        // the likelihood term.
        Tensor<float> logits_b = model.forward_logits(id_batch, &dropout_rng);
        Tensor<float> probs_b = softmax_t(logits_b, 1.0f);
        Tensor<float> nll_b = nll_loss(probs_b, targets_flat, {}, cfg.label_smoothing);
        nll = scale(add(nll, nll_b), 0.5f);
        rdrop_term = rdrop_loss(probs, probs_b, {}, *cfg.rdrop_weight);
      }
      double nll_value = nll.item();
      double ld_value = 0.0;

      Tensor<float> loss = nll;
      if (consist_on) {
        Tensor<float> child_tau =
            cfg.consist->tau == 1.0 ? probs : softmax_t(logits, float(cfg.consist->tau));
        long rows = child_tau.size() / vocab;
        Tensor<float> parent_dists = Tensor<float>::zeros({rows, vocab});
        float* dst = parent_dists.data().data();
        for (size_t idx : b.items) {
          const auto& rows_i = parent_rows[idx];
          std::copy(rows_i.begin(), rows_i.end(), dst);
          dst += rows_i.size();
        }
        Tensor<float> ld = consist_loss(child_tau, parent_dists, {}, *cfg.consist);
        ld_value = ld.item();
        loss = total_loss(loss, ld, *cfg.consist);
      }
      if (rdrop_on) loss = add(loss, rdrop_term);

      tape.backward(loss);
      ++step;
      if (cfg.clip_norm > 0.0) {
        double norm = grad_global_norm(model.params);
        if (!std::isfinite(norm)) throw NumericError("train: non-finite gradient norm");
        if (norm > cfg.clip_norm) scale_grads(model.params, float(cfg.clip_norm / norm));
      }
      last_lr = lr_at(step, cfg.warmup_steps, cfg.peak_lr);
      opt.step(model.params, last_lr);
      model.params.zero_grad();

      nll_sum += nll_value * double(b.tgt_tokens);
      ld_sum += ld_value * double(b.tgt_tokens);
      token_sum += b.tgt_tokens;
    }

    // Greedy validation BLEU (beam 5 is reserved for final reporting).
    std::vector<std::string> hyps(valid_src.size());
    for (size_t i = 0; i < valid_src.size(); ++i) {
      DecodeResult r = greedy_decode(model, valid_src[i], model.cfg.max_positions - 1);
      hyps[i] = decode_ids(r.ids, data.tgt_codec->vocab);
    }
    double val_bleu = bleu(hyps, data.valid->target);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                      .count();
    result.log.epochs.push_back({epoch, val_bleu, token_sum ? nll_sum / double(token_sum) : 0.0,
                                 token_sum ? ld_sum / double(token_sum) : 0.0, last_lr, secs});

    if (val_bleu > result.best_bleu) {
      result.best_bleu = val_bleu;
      result.best_epoch = epoch;
      result.best = model.clone_values();
    }
  }

  if (consist_on) {
    size_t k = 0;
    for (const auto& name : data.parent->params.names)
      for (float v : data.parent->params.at(name).data())
        if (v != parent_fingerprint_before[k++])
          throw NumericError("train: parent parameters changed during child training");
  }
  return result;
}

}  // namespace nmt
