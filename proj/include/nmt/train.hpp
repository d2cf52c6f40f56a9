#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nmt/consist.hpp"
#include "nmt/corpus.hpp"
#include "nmt/model.hpp"
#include "nmt/subword.hpp"

// Optimization loop: Adam with inverse-square-root schedule, epoch-based
// training with token-budget batching, greedy-decode validation BLEU per
// epoch, and best-BLEU checkpoint selection.

namespace nmt {

enum class TrainMode { Parent, Scratch, Transfer };

TrainMode train_mode_from_name(const std::string& s);
const char* train_mode_name(TrainMode m);

struct TrainConfig {
  TrainMode mode = TrainMode::Transfer;
  long warmup_steps = -1;  // -1 resolves to the mode default
  double peak_lr = -1.0;
  long epochs = 50;
  long max_tokens_per_batch = 1000;
  double dropout = -1.0;  // -1 resolves to the mode default (triple)
  double attention_dropout = -1.0;
  double activation_dropout = -1.0;
  double label_smoothing = 0.1;
  double clip_norm = 1.0;  // global-norm gradient clip; 0 disables
  uint64_t seed = 1;
  std::optional<ConsistConfig> consist;
  std::optional<double> rdrop_weight;

  // Mode defaults: parent 10000 warmup / peak 1e-3 / dropout 0.1;
  // scratch 8000 / 5e-4; transfer 1000 / 2e-4; low-resource modes use
  // dropout 0.3 with attention/activation dropout 0.1.
  TrainConfig resolved() const;
  void validate() const;
};

// Inverse-square-root schedule: peak * min(step/warmup, sqrt(warmup/step)).
double lr_at(long step, long warmup, double peak);

// Adam with bias correction; beta = (0.9, 0.98) per the training setup.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update over all parameters; aborts on non-finite gradients.
  void step(ParamStore<float>& params, double lr);

  long steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<std::string, std::vector<float>> m_, v_;
};

struct EpochRecord {
  long epoch = 0;
  double bleu = 0.0;
  double nll = 0.0;
  double l_d = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  void save(const std::string& path) const;  // epoch<TAB>bleu<TAB>nll<TAB>l_d<TAB>lr<TAB>seconds
  static TrainingLog load(const std::string& path);
};

struct TrainResult {
  Model<float> best;
  TrainingLog log;
  double best_bleu = 0.0;
  long best_epoch = 0;
};

struct TrainData {
  const ParallelCorpus* train = nullptr;
  const ParallelCorpus* pseudo = nullptr;  // order-aligned with train (consist runs)
  const Model<float>* parent = nullptr;    // fixed teacher (consist runs)
  const ParallelCorpus* valid = nullptr;
  const Codec* src_codec = nullptr;
  const Codec* tgt_codec = nullptr;
  const Codec* parent_src_codec = nullptr;  // encodes pseudo sources
};

// Trains a child (or parent/scratch) model. When consist is enabled the
// parent runs teacher-forced on the order-aligned pseudo instances with
// dropout disabled and no gradient; its per-position distributions enter
// consist_loss against the child's, and the total objective is
// L_nll + alpha * L_d. Returns the checkpoint with the best validation BLEU.
TrainResult train_child(const Model<float>& init, const TrainData& data, const TrainConfig& cfg);

}  // namespace nmt
