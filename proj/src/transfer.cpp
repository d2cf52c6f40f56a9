#include "nmt/transfer.hpp"

#include <fstream>
#include <sstream>

namespace nmt {

namespace {

// Shared-target-vocabulary transfer: everything except the child source
// embedding table is copied verbatim from the parent.
Model<float> copy_parent_skeleton(const Model<float>& parent, const ModelConfig& child_cfg,
                                  const Vocabulary& child_src_vocab,
                                  const Vocabulary& shared_tgt_vocab, TransferReport& report) {
  if (!parent.cfg.same_architecture(child_cfg)) {
    std::ostringstream msg;
    msg << "transfer: architecture mismatch — parent layers/dim/ffn/heads/maxpos = "
        << parent.cfg.layers << "/" << parent.cfg.model_dim << "/" << parent.cfg.ffn_dim << "/"
        << parent.cfg.heads << "/" << parent.cfg.max_positions << ", child = " << child_cfg.layers
        << "/" << child_cfg.model_dim << "/" << child_cfg.ffn_dim << "/" << child_cfg.heads << "/"
        << child_cfg.max_positions;
    throw ValueError(msg.str());
  }
  if (parent.tgt_vocab_size != shared_tgt_vocab.size() ||
      parent.tgt_vocab_fp != shared_tgt_vocab.fingerprint())
    throw ValueError(
        "transfer: parent target vocabulary does not match the shared target vocabulary "
        "(fingerprint mismatch)");

  Model<float> child;
  child.cfg = child_cfg;
  child.src_vocab_size = child_src_vocab.size();
  child.tgt_vocab_size = parent.tgt_vocab_size;
  child.src_vocab_fp = child_src_vocab.fingerprint();
  child.tgt_vocab_fp = parent.tgt_vocab_fp;
  for (const auto& name : parent.params.names) {
    const auto& src = parent.params.at(name);
    if (name == "src_embed") {
      child.params.add(name, Tensor<float>::zeros({child.src_vocab_size, child_cfg.model_dim}, true));
    } else {
      child.params.add(name, Tensor<float>::from(src.shape(), src.data(), true));
      report.copied_parameter_names.push_back(name);
    }
  }
  return child;
}

}  // namespace

std::string TransferReport::to_text() const {
  std::ostringstream out;
  out << "matched\t" << matched << '\n';
  out << "randomly_initialized\t" << randomly_initialized << '\n';
  out << "copied_parameters\t" << copied_parameter_names.size() << '\n';
  for (const auto& name : copied_parameter_names) out << "copied\t" << name << '\n';
  for (const auto& tok : matched_tokens) out << "matched_token\t" << tok << '\n';
  return out.str();
}

void TransferReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write transfer report: " + path);
  out << to_text();
}

std::pair<Model<float>, TransferReport> tl_init(const Model<float>& parent,
                                                const ModelConfig& child_cfg,
                                                const Vocabulary& child_src_vocab,
                                                const Vocabulary& shared_tgt_vocab,
                                                uint64_t seed) {
  TransferReport report;
  Model<float> child = copy_parent_skeleton(parent, child_cfg, child_src_vocab, shared_tgt_vocab,
                                            report);
  const auto& parent_embed = parent.params.at("src_embed");
  auto& child_embed = child.params.at("src_embed");
  long d = child_cfg.model_dim;
  long parent_rows = parent_embed.dim(0);
  Rng rng(mix_seed(seed, 0x71AD));
  for (long i = 0; i < child.src_vocab_size; ++i) {
    long row = static_cast<long>(rng.integer(static_cast<uint64_t>(parent_rows)));
    std::copy(parent_embed.data().begin() + row * d, parent_embed.data().begin() + (row + 1) * d,
              child_embed.data().begin() + i * d);
  }
  report.matched = 0;
  report.randomly_initialized = child.src_vocab_size;
  return {std::move(child), std::move(report)};
}

std::pair<Model<float>, TransferReport> tm_init(const Model<float>& parent,
                                                const ModelConfig& child_cfg,
                                                const Vocabulary& parent_src_vocab,
                                                const Vocabulary& child_src_vocab,
                                                const Vocabulary& shared_tgt_vocab,
                                                uint64_t seed) {
  if (parent_src_vocab.size() != parent.src_vocab_size ||
      parent_src_vocab.fingerprint() != parent.src_vocab_fp)
    throw ValueError("tm_init: supplied parent source vocabulary does not match the parent "
                     "checkpoint (fingerprint mismatch)");
  TransferReport report;
  Model<float> child = copy_parent_skeleton(parent, child_cfg, child_src_vocab, shared_tgt_vocab,
                                            report);
  const auto& parent_embed = parent.params.at("src_embed");
  auto& child_embed = child.params.at("src_embed");
  long d = child_cfg.model_dim;
  double stddev = 1.0 / std::sqrt(double(d));
  Rng rng(mix_seed(seed, 0x71AD));
  for (long i = 0; i < child.src_vocab_size; ++i) {
    const std::string& tok = child_src_vocab.token(static_cast<int>(i));
    auto it = parent_src_vocab.token_to_id.find(tok);
    if (it != parent_src_vocab.token_to_id.end()) {
      long row = it->second;
      std::copy(parent_embed.data().begin() + row * d, parent_embed.data().begin() + (row + 1) * d,
                child_embed.data().begin() + i * d);
      ++report.matched;
      report.matched_tokens.push_back(tok);
    } else {
      for (long j = 0; j < d; ++j)
        child_embed.data()[static_cast<size_t>(i * d + j)] = float(rng.normal(0.0, stddev));
      ++report.randomly_initialized;
    }
  }
  return {std::move(child), std::move(report)};
}

}  // namespace nmt
