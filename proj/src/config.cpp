#include "nmt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace nmt {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_model(const json& j, ModelConfig& m) {
  reject_unknown_keys(j,
                      {"layers", "model_dim", "ffn_dim", "heads", "dropout", "attention_dropout",
                       "activation_dropout", "max_positions", "tie_target_embeddings"},
                      "model");
  read_field(j, "layers", m.layers);
  read_field(j, "model_dim", m.model_dim);
  read_field(j, "ffn_dim", m.ffn_dim);
  read_field(j, "heads", m.heads);
  read_field(j, "dropout", m.dropout);
  read_field(j, "attention_dropout", m.attention_dropout);
  read_field(j, "activation_dropout", m.activation_dropout);
  read_field(j, "max_positions", m.max_positions);
  read_field(j, "tie_target_embeddings", m.tie_target_embeddings);
  m.validate();
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown_keys(j,
                      {"mode", "warmup_steps", "peak_lr", "epochs", "max_tokens_per_batch",
                       "dropout", "attention_dropout", "activation_dropout", "label_smoothing",
                       "clip_norm"},
                      "train");
  if (j.contains("mode")) t.mode = train_mode_from_name(j.at("mode").get<std::string>());
  read_field(j, "warmup_steps", t.warmup_steps);
  read_field(j, "peak_lr", t.peak_lr);
  read_field(j, "epochs", t.epochs);
  read_field(j, "max_tokens_per_batch", t.max_tokens_per_batch);
  read_field(j, "dropout", t.dropout);
  read_field(j, "attention_dropout", t.attention_dropout);
  read_field(j, "activation_dropout", t.activation_dropout);
  read_field(j, "label_smoothing", t.label_smoothing);
  read_field(j, "clip_norm", t.clip_norm);
}

ConsistConfig parse_consist(const json& j) {
  reject_unknown_keys(j, {"alpha", "tau", "divergence"}, "consist");
  ConsistConfig c;
  read_field(j, "alpha", c.alpha);
  read_field(j, "tau", c.tau);
  if (j.contains("divergence"))
    c.divergence = divergence_from_name(j.at("divergence").get<std::string>());
  c.validate();
  return c;
}

void parse_decode(const json& j, DecodeParams& d) {
  reject_unknown_keys(j, {"method", "beam", "len_penalty", "max_len", "seed"}, "decode");
  if (j.contains("method")) d.method = decode_method_from_name(j.at("method").get<std::string>());
  read_field(j, "beam", d.beam);
  read_field(j, "len_penalty", d.len_penalty);
  read_field(j, "max_len", d.max_len);
  read_field(j, "seed", d.seed);
  if (d.beam < 1) throw ConfigError("decode.beam must be >= 1");
  if (d.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
}

void parse_datagen(const json& j, DataGenConfig& d) {
  reject_unknown_keys(j,
                      {"base_vocab_size", "target_seed", "parent_seed", "child_seed",
                       "cognate_fraction", "reorder_window", "min_len", "max_len",
                       "zipf_exponent", "parent_pairs", "child_pairs", "valid_pairs",
                       "test_pairs", "mono_sentences"},
                      "datagen");
  read_field(j, "base_vocab_size", d.spec.base_vocab_size);
  read_field(j, "target_seed", d.spec.target_seed);
  read_field(j, "parent_seed", d.spec.parent_seed);
  read_field(j, "child_seed", d.spec.child_seed);
  read_field(j, "cognate_fraction", d.spec.cognate_fraction);
  read_field(j, "reorder_window", d.spec.reorder_window);
  read_field(j, "min_len", d.spec.min_len);
  read_field(j, "max_len", d.spec.max_len);
  read_field(j, "zipf_exponent", d.spec.zipf_exponent);
  read_field(j, "parent_pairs", d.parent_pairs);
  read_field(j, "child_pairs", d.child_pairs);
  read_field(j, "valid_pairs", d.valid_pairs);
  read_field(j, "test_pairs", d.test_pairs);
  read_field(j, "mono_sentences", d.mono_sentences);
  d.spec.validate();
}

void parse_bpe(const json& j, BpeConfig& b) {
  reject_unknown_keys(j, {"parent_src_merges", "child_src_merges", "target_merges"}, "bpe");
  read_field(j, "parent_src_merges", b.parent_src_merges);
  read_field(j, "child_src_merges", b.child_src_merges);
  read_field(j, "target_merges", b.target_merges);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + origin + ": " + e.what());
  }
  try {
    reject_unknown_keys(
        j, {"seed", "model", "train", "consist", "rdrop", "decode", "datagen", "bpe"}, origin);
    ExperimentConfig c;
    read_field(j, "seed", c.seed);
    if (j.contains("model")) parse_model(j.at("model"), c.model);
    if (j.contains("train")) parse_train(j.at("train"), c.train);
    if (j.contains("consist")) c.consist = parse_consist(j.at("consist"));
    if (j.contains("rdrop")) {
      reject_unknown_keys(j.at("rdrop"), {"weight"}, "rdrop");
      double w = 5.0;
      read_field(j.at("rdrop"), "weight", w);
      if (w < 0.0) throw ConfigError("rdrop.weight must be >= 0");
      c.rdrop_weight = w;
    }
    if (j.contains("decode")) parse_decode(j.at("decode"), c.decode);
    if (j.contains("datagen")) parse_datagen(j.at("datagen"), c.datagen);
    if (j.contains("bpe")) parse_bpe(j.at("bpe"), c.bpe);
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("invalid config " + origin + ": " + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string ExperimentConfig::dump() const {
  json j;
  j["seed"] = seed;
  j["model"] = {{"layers", model.layers},
                {"model_dim", model.model_dim},
                {"ffn_dim", model.ffn_dim},
                {"heads", model.heads},
                {"dropout", model.dropout},
                {"attention_dropout", model.attention_dropout},
                {"activation_dropout", model.activation_dropout},
                {"max_positions", model.max_positions},
                {"tie_target_embeddings", model.tie_target_embeddings}};
  j["train"] = {{"mode", train_mode_name(train.mode)},
                {"warmup_steps", train.warmup_steps},
                {"peak_lr", train.peak_lr},
                {"epochs", train.epochs},
                {"max_tokens_per_batch", train.max_tokens_per_batch},
                {"dropout", train.dropout},
                {"attention_dropout", train.attention_dropout},
                {"activation_dropout", train.activation_dropout},
                {"label_smoothing", train.label_smoothing},
                {"clip_norm", train.clip_norm}};
  if (consist)
    j["consist"] = {{"alpha", consist->alpha},
                    {"tau", consist->tau},
                    {"divergence", divergence_name(consist->divergence)}};
  if (rdrop_weight) j["rdrop"] = {{"weight", *rdrop_weight}};
  j["decode"] = {{"method", decode_method_name(decode.method)},
                 {"beam", decode.beam},
                 {"len_penalty", decode.len_penalty},
                 {"max_len", decode.max_len},
                 {"seed", decode.seed}};
  j["datagen"] = {{"base_vocab_size", datagen.spec.base_vocab_size},
                  {"target_seed", datagen.spec.target_seed},
                  {"parent_seed", datagen.spec.parent_seed},
                  {"child_seed", datagen.spec.child_seed},
                  {"cognate_fraction", datagen.spec.cognate_fraction},
                  {"reorder_window", datagen.spec.reorder_window},
                  {"min_len", datagen.spec.min_len},
                  {"max_len", datagen.spec.max_len},
                  {"zipf_exponent", datagen.spec.zipf_exponent},
                  {"parent_pairs", datagen.parent_pairs},
                  {"child_pairs", datagen.child_pairs},
                  {"valid_pairs", datagen.valid_pairs},
                  {"test_pairs", datagen.test_pairs},
                  {"mono_sentences", datagen.mono_sentences}};
  j["bpe"] = {{"parent_src_merges", bpe.parent_src_merges},
              {"child_src_merges", bpe.child_src_merges},
              {"target_merges", bpe.target_merges}};
  return j.dump(2);
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path);
  out << dump() << '\n';
}

}  // namespace nmt
