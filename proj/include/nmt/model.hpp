#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/rng.hpp"
#include "nmt/tensor.hpp"

// Transformer encoder-decoder (post-norm, learned positional embeddings,
// ReLU feed-forward) with a teacher-forced forward pass. The target input
// embedding doubles as the output projection when tied.

namespace nmt {

struct ModelConfig {
  int layers = 2;
  int model_dim = 64;
  int ffn_dim = 128;
  int heads = 4;
  double dropout = 0.1;             // residual / embedding dropout
  double attention_dropout = 0.0;
  double activation_dropout = 0.0;
  int max_positions = 128;
  bool tie_target_embeddings = true;

  void validate() const {
    if (layers < 1) throw ValueError("model: layers must be >= 1");
    if (model_dim < 1 || ffn_dim < 1) throw ValueError("model: dims must be positive");
    if (heads < 1 || model_dim % heads != 0)
      throw ValueError("model: model_dim " + std::to_string(model_dim) +
                       " not divisible by heads " + std::to_string(heads));
    for (double r : {dropout, attention_dropout, activation_dropout})
      if (r < 0.0 || r >= 1.0) throw ValueError("model: dropout rates must be in [0,1)");
    if (max_positions < 1) throw ValueError("model: max_positions must be >= 1");
  }

  bool same_architecture(const ModelConfig& o) const {
    return layers == o.layers && model_dim == o.model_dim && ffn_dim == o.ffn_dim &&
           heads == o.heads && max_positions == o.max_positions &&
           tie_target_embeddings == o.tie_target_embeddings;
  }
};

// Named parameters in a fixed construction order (the checkpoint directory
// order). Tied parameters are stored once.
template <typename T>
struct ParamStore {
  std::vector<std::string> names;
  std::unordered_map<std::string, Tensor<T>> tensors;

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    auto [it, fresh] = tensors.emplace(name, std::move(t));
    if (!fresh) throw ValueError("duplicate parameter name: " + name);
    names.push_back(name);
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValueError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValueError("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  void set_requires_grad(bool v) {
    for (auto& name : names) tensors.at(name).set_requires_grad(v);
  }
  void zero_grad() {
    for (auto& name : names) tensors.at(name).zero_grad();
  }
};

// One equal-length training batch: every sequence in src shares one length,
// every sequence in tgt shares another.
struct IdBatch {
  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;  // references y (eos-terminated)
};

template <typename T>
struct Model {
  ModelConfig cfg;
  long src_vocab_size = 0;
  long tgt_vocab_size = 0;
  uint64_t src_vocab_fp = 0;
  uint64_t tgt_vocab_fp = 0;
  ParamStore<T> params;

  static Model init(const ModelConfig& cfg, long src_vocab, long tgt_vocab, uint64_t src_fp,
                    uint64_t tgt_fp, uint64_t seed);

  // Per-position prediction distributions (T x V_tgt) for one pair under
  // temperature tau; the target is shifted right internally with bos.
  // Dropout is active only when train_rng is non-null.
  Tensor<T> forward_teacher(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
                            T tau, Rng* train_rng = nullptr) const;

  // Batched teacher-forced logits ((B*T) x V_tgt) over an equal-length batch.
  Tensor<T> forward_logits(const IdBatch& batch, Rng* train_rng = nullptr) const;

  const Tensor<T>& output_table() const {
    return cfg.tie_target_embeddings ? params.at("tgt_embed") : params.at("out_proj");
  }

  Model clone_values() const;

  // Casts parameter values to another scalar type (double for grad checks).
  template <typename U>
  Model<U> cast() const;
};

using ModelF = Model<float>;

namespace detail {

template <typename T>
Tensor<T> glorot(Shape shape, Rng& rng) {
  long fan_in = shape[0], fan_out = shape[1];
  double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor<T> t = Tensor<T>::zeros(shape);
  for (auto& v : t.data()) v = T(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
Tensor<T> normal_embed(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t = Tensor<T>::zeros(shape);
  for (auto& v : t.data()) v = T(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
void add_attention_params(ParamStore<T>& p, const std::string& prefix, int d, Rng& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(prefix + "." + w, glorot<T>({d, d}, rng));
  for (const char* b : {"bq", "bk", "bv", "bo"}) p.add(prefix + "." + b, Tensor<T>::zeros({d}));
}

template <typename T>
void add_layer_norm_params(ParamStore<T>& p, const std::string& prefix, int d) {
  Tensor<T> g = Tensor<T>::zeros({d});
  std::fill(g.data().begin(), g.data().end(), T(1));
  p.add(prefix + ".g", std::move(g));
  p.add(prefix + ".b", Tensor<T>::zeros({d}));
}

template <typename T>
void add_ffn_params(ParamStore<T>& p, const std::string& prefix, int d, int f, Rng& rng) {
  p.add(prefix + ".w1", glorot<T>({d, f}, rng));
  p.add(prefix + ".b1", Tensor<T>::zeros({f}));
  p.add(prefix + ".w2", glorot<T>({f, d}, rng));
  p.add(prefix + ".b2", Tensor<T>::zeros({d}));
}

}  // namespace detail

template <typename T>
Model<T> Model<T>::init(const ModelConfig& cfg, long src_vocab, long tgt_vocab, uint64_t src_fp,
                        uint64_t tgt_fp, uint64_t seed) {
  cfg.validate();
  if (src_vocab < 4 || tgt_vocab < 4) throw ValueError("model: vocabularies too small");
  Model m;
  m.cfg = cfg;
  m.src_vocab_size = src_vocab;
  m.tgt_vocab_size = tgt_vocab;
  m.src_vocab_fp = src_fp;
  m.tgt_vocab_fp = tgt_fp;

  Rng rng(mix_seed(seed, 0x1417));
  int d = cfg.model_dim;
  double embed_std = 1.0 / std::sqrt(double(d));
  auto& p = m.params;
  p.add("src_embed", detail::normal_embed<T>({src_vocab, d}, embed_std, rng));
  p.add("tgt_embed", detail::normal_embed<T>({tgt_vocab, d}, embed_std, rng));
  if (!cfg.tie_target_embeddings)
    p.add("out_proj", detail::normal_embed<T>({tgt_vocab, d}, embed_std, rng));
  p.add("enc_pos", detail::normal_embed<T>({cfg.max_positions, d}, embed_std, rng));
  p.add("dec_pos", detail::normal_embed<T>({cfg.max_positions, d}, embed_std, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    std::string e = "enc" + std::to_string(l);
    detail::add_attention_params(p, e + ".attn", d, rng);
    detail::add_layer_norm_params(p, e + ".ln1", d);
    detail::add_ffn_params(p, e + ".ffn", d, cfg.ffn_dim, rng);
    detail::add_layer_norm_params(p, e + ".ln2", d);
  }
  for (int l = 0; l < cfg.layers; ++l) {
    std::string dl = "dec" + std::to_string(l);
    detail::add_attention_params(p, dl + ".self", d, rng);
    detail::add_layer_norm_params(p, dl + ".ln1", d);
    detail::add_attention_params(p, dl + ".cross", d, rng);
    detail::add_layer_norm_params(p, dl + ".ln2", d);
    detail::add_ffn_params(p, dl + ".ffn", d, cfg.ffn_dim, rng);
    detail::add_layer_norm_params(p, dl + ".ln3", d);
  }
  p.set_requires_grad(true);
  return m;
}

namespace detail {

// Multi-head attention over equal-length sequences. q_in: (B*Lq, d) rows,
// kv_in: (B*Ls, d) rows. Causal masking applies to decoder self-attention
// (Lq == Ls).
template <typename T>
Tensor<T> attention(const ParamStore<T>& p, const std::string& prefix, const Tensor<T>& q_in,
                    const Tensor<T>& kv_in, long b, long lq, long ls, int heads, bool causal,
                    double attn_dropout, Rng* rng) {
  long d = q_in.shape().back();
  long dh = d / heads;
  Tensor<T> q = add_bias(matmul(q_in, p.at(prefix + ".wq")), p.at(prefix + ".bq"));
  Tensor<T> k = add_bias(matmul(kv_in, p.at(prefix + ".wk")), p.at(prefix + ".bk"));
  Tensor<T> v = add_bias(matmul(kv_in, p.at(prefix + ".wv")), p.at(prefix + ".bv"));
  Tensor<T> qh = split_heads(q, b, lq, heads);
  Tensor<T> kh = split_heads(k, b, ls, heads);
  Tensor<T> vh = split_heads(v, b, ls, heads);
  Tensor<T> scores = scale(bmm_nt(qh, kh), T(1.0 / std::sqrt(double(dh))));
  Tensor<T> attn = causal ? softmax_causal(scores) : softmax_t(scores, T(1));
  if (rng && attn_dropout > 0.0) attn = dropout(attn, attn_dropout, *rng);
  Tensor<T> ctx = merge_heads(bmm_nn(attn, vh), b, lq, heads);
  return add_bias(matmul(ctx, p.at(prefix + ".wo")), p.at(prefix + ".bo"));
}

template <typename T>
Tensor<T> residual_norm(const ParamStore<T>& p, const std::string& ln, const Tensor<T>& x,
                        const Tensor<T>& sub, double rate, Rng* rng) {
  Tensor<T> s = (rng && rate > 0.0) ? dropout(sub, rate, *rng) : sub;
  return layer_norm(add(x, s), p.at(ln + ".g"), p.at(ln + ".b"));
}

template <typename T>
Tensor<T> ffn_block(const ParamStore<T>& p, const std::string& prefix, const Tensor<T>& x,
                    double act_dropout, Rng* rng) {
  Tensor<T> h = relu(add_bias(matmul(x, p.at(prefix + ".w1")), p.at(prefix + ".b1")));
  if (rng && act_dropout > 0.0) h = dropout(h, act_dropout, *rng);
  return add_bias(matmul(h, p.at(prefix + ".w2")), p.at(prefix + ".b2"));
}

template <typename T>
Tensor<T> embed_positions(const ParamStore<T>& p, const std::string& table,
                          const Tensor<T>& token_embed, long b, long len) {
  std::vector<int> pos(static_cast<size_t>(b * len));
  for (long i = 0; i < b; ++i)
    for (long j = 0; j < len; ++j) pos[static_cast<size_t>(i * len + j)] = static_cast<int>(j);
  return add(token_embed, embedding(p.at(table), pos));
}

}  // namespace detail

template <typename T>
Tensor<T> Model<T>::forward_logits(const IdBatch& batch, Rng* train_rng) const {
  long b = static_cast<long>(batch.src.size());
  if (b == 0 || batch.tgt.size() != batch.src.size())
    throw ShapeError("forward: batch source/target counts differ");
  long s = static_cast<long>(batch.src[0].size());
  long t = static_cast<long>(batch.tgt[0].size());
  if (s < 1 || t < 1) throw ShapeError("forward: empty sequence in batch");
  if (s > cfg.max_positions || t > cfg.max_positions)
    throw ValueError("forward: sequence length exceeds max positions " +
                     std::to_string(cfg.max_positions));

  std::vector<int> src_flat(static_cast<size_t>(b * s));
  std::vector<int> tgt_in_flat(static_cast<size_t>(b * t));
  for (long i = 0; i < b; ++i) {
    if (static_cast<long>(batch.src[i].size()) != s ||
        static_cast<long>(batch.tgt[i].size()) != t)
      throw ShapeError("forward: batch is not equal-length");
    for (long j = 0; j < s; ++j) src_flat[static_cast<size_t>(i * s + j)] = batch.src[i][j];
    tgt_in_flat[static_cast<size_t>(i * t)] = 1;  // bos
    for (long j = 1; j < t; ++j)
      tgt_in_flat[static_cast<size_t>(i * t + j)] = batch.tgt[i][static_cast<size_t>(j - 1)];
  }

  const double drop = train_rng ? cfg.dropout : 0.0;
  const double adrop = train_rng ? cfg.attention_dropout : 0.0;
  const double fdrop = train_rng ? cfg.activation_dropout : 0.0;
  const T emb_scale = T(std::sqrt(double(cfg.model_dim)));

  // encoder
  Tensor<T> x = scale(embedding(params.at("src_embed"), src_flat), emb_scale);
  x = detail::embed_positions(params, "enc_pos", x, b, s);
  if (train_rng && drop > 0.0) x = dropout(x, drop, *train_rng);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string e = "enc" + std::to_string(l);
    Tensor<T> h =
        detail::attention(params, e + ".attn", x, x, b, s, s, cfg.heads, false, adrop, train_rng);
    x = detail::residual_norm(params, e + ".ln1", x, h, drop, train_rng);
    Tensor<T> f = detail::ffn_block(params, e + ".ffn", x, fdrop, train_rng);
    x = detail::residual_norm(params, e + ".ln2", x, f, drop, train_rng);
  }
  Tensor<T> enc_out = x;

  // decoder
  Tensor<T> y = scale(embedding(params.at("tgt_embed"), tgt_in_flat), emb_scale);
  y = detail::embed_positions(params, "dec_pos", y, b, t);
  if (train_rng && drop > 0.0) y = dropout(y, drop, *train_rng);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string dl = "dec" + std::to_string(l);
    Tensor<T> h = detail::attention(params, dl + ".self", y, y, b, t, t, cfg.heads, true, adrop,
                                    train_rng);
    y = detail::residual_norm(params, dl + ".ln1", y, h, drop, train_rng);
    Tensor<T> c = detail::attention(params, dl + ".cross", y, enc_out, b, t, s, cfg.heads, false,
                                    adrop, train_rng);
    y = detail::residual_norm(params, dl + ".ln2", y, c, drop, train_rng);
    Tensor<T> f = detail::ffn_block(params, dl + ".ffn", y, fdrop, train_rng);
    y = detail::residual_norm(params, dl + ".ln3", y, f, drop, train_rng);
  }
  return matmul_nt(y, output_table());  // (B*T, V_tgt)
}

template <typename T>
Tensor<T> Model<T>::forward_teacher(const std::vector<int>& src_ids,
                                    const std::vector<int>& tgt_ids, T tau, Rng* train_rng) const {
  IdBatch batch{{src_ids}, {tgt_ids}};
  return softmax_t(forward_logits(batch, train_rng), tau);
}

template <typename T>
Model<T> Model<T>::clone_values() const {
  Model m;
  m.cfg = cfg;
  m.src_vocab_size = src_vocab_size;
  m.tgt_vocab_size = tgt_vocab_size;
  m.src_vocab_fp = src_vocab_fp;
  m.tgt_vocab_fp = tgt_vocab_fp;
  for (const auto& name : params.names) {
    const Tensor<T>& src = params.at(name);
    m.params.add(name, Tensor<T>::from(src.shape(), src.data(), src.requires_grad()));
  }
  return m;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> m;
  m.cfg = cfg;
  m.src_vocab_size = src_vocab_size;
  m.tgt_vocab_size = tgt_vocab_size;
  m.src_vocab_fp = src_vocab_fp;
  m.tgt_vocab_fp = tgt_vocab_fp;
  for (const auto& name : params.names) {
    const Tensor<T>& src = params.at(name);
    std::vector<U> vals(src.data().begin(), src.data().end());
    m.params.add(name, Tensor<U>::from(src.shape(), std::move(vals), src.requires_grad()));
  }
  return m;
}

}  // namespace nmt
