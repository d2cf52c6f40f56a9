#include "nmt/decode.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace nmt {

namespace {

// y(m) = x(n) * W(n,m) + b(m); same accumulation order as the batched path.
void affine_row(const std::vector<float>& x, const Tensor<float>& w, const Tensor<float>& b,
                std::vector<float>& y) {
  long n = w.dim(0), m = w.dim(1);
  y.assign(static_cast<size_t>(m), 0.0f);
  const float* wd = w.data().data();
  for (long p = 0; p < n; ++p) {
    float xp = x[static_cast<size_t>(p)];
    const float* wrow = wd + p * m;
    for (long j = 0; j < m; ++j) y[static_cast<size_t>(j)] += xp * wrow[j];
  }
  const auto& bd = b.data();
  for (long j = 0; j < m; ++j) y[static_cast<size_t>(j)] += bd[static_cast<size_t>(j)];
}

void softmax_inplace(std::vector<float>& z) {
  float mx = *std::max_element(z.begin(), z.end());
  float sum = 0.0f;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  float inv = 1.0f / sum;
  for (auto& v : z) v *= inv;
}

void layer_norm_row(std::vector<float>& x, const Tensor<float>& g, const Tensor<float>& b,
                    float eps = 1e-5f) {
  long d = static_cast<long>(x.size());
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= float(d);
  float var = 0.0f;
  for (float v : x) {
    float c = v - mean;
    var += c * c;
  }
  var /= float(d);
  float inv = 1.0f / std::sqrt(var + eps);
  const auto& gd = g.data();
  const auto& bd = b.data();
  for (long j = 0; j < d; ++j)
    x[static_cast<size_t>(j)] =
        (x[static_cast<size_t>(j)] - mean) * inv * gd[static_cast<size_t>(j)] +
        bd[static_cast<size_t>(j)];
}

// Attention of a single query row against L cached key/value rows laid out
// head-major contiguously per row (d floats per row).
void attend_row(const std::vector<float>& q, const std::vector<float>& keys,
                const std::vector<float>& values, long len, int heads, long d,
                std::vector<float>& out) {
  long dh = d / heads;
  float scale = 1.0f / std::sqrt(float(dh));
  out.assign(static_cast<size_t>(d), 0.0f);
  std::vector<float> scores(static_cast<size_t>(len));
  for (int h = 0; h < heads; ++h) {
    const float* qh = q.data() + h * dh;
    for (long i = 0; i < len; ++i) {
      const float* kh = keys.data() + i * d + h * dh;
      float acc = 0.0f;
      for (long j = 0; j < dh; ++j) acc += qh[j] * kh[j];
      scores[static_cast<size_t>(i)] = acc * scale;
    }
    float mx = *std::max_element(scores.begin(), scores.begin() + len);
    float sum = 0.0f;
    for (long i = 0; i < len; ++i) {
      scores[static_cast<size_t>(i)] = std::exp(scores[static_cast<size_t>(i)] - mx);
      sum += scores[static_cast<size_t>(i)];
    }
    float inv = 1.0f / sum;
    float* oh = out.data() + h * dh;
    for (long i = 0; i < len; ++i) {
      float a = scores[static_cast<size_t>(i)] * inv;
      const float* vh = values.data() + i * d + h * dh;
      for (long j = 0; j < dh; ++j) oh[j] += a * vh[j];
    }
  }
}

void add_inplace(std::vector<float>& x, const std::vector<float>& y) {
  for (size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

}  // namespace

DecodeParams::Method decode_method_from_name(const std::string& name) {
  if (name == "greedy") return DecodeParams::Method::Greedy;
  if (name == "beam") return DecodeParams::Method::Beam;
  if (name == "sample") return DecodeParams::Method::Sample;
  throw ValueError("unknown decode method '" + name + "' (expected greedy, beam or sample)");
}

const char* decode_method_name(DecodeParams::Method m) {
  switch (m) {
    case DecodeParams::Method::Greedy: return "greedy";
    case DecodeParams::Method::Beam: return "beam";
    default: return "sample";
  }
}

DecoderSession::DecoderSession(const Model<float>& model, const std::vector<int>& src_ids)
    : model_(&model) {
  const auto& cfg = model.cfg;
  src_len_ = static_cast<long>(src_ids.size());
  if (src_len_ < 1) throw ValueError("decode: empty source sequence");
  if (src_len_ > cfg.max_positions)
    throw ValueError("decode: source length exceeds max positions " +
                     std::to_string(cfg.max_positions));

  long d = cfg.model_dim;
  {
    const auto& p = model.params;
    const float emb_scale = std::sqrt(float(d));
    std::vector<float> x(static_cast<size_t>(src_len_ * d));
    const auto& table = p.at("src_embed").data();
    const auto& pos = p.at("enc_pos").data();
    for (long i = 0; i < src_len_; ++i)
      for (long j = 0; j < d; ++j)
        x[static_cast<size_t>(i * d + j)] =
            table[static_cast<size_t>(src_ids[static_cast<size_t>(i)] * d + j)] * emb_scale +
            pos[static_cast<size_t>(i * d + j)];

    std::vector<float> row(static_cast<size_t>(d)), tmp, attn_out, q, k, v;
    std::vector<float> keys(static_cast<size_t>(src_len_ * d)),
        vals(static_cast<size_t>(src_len_ * d));
    for (int l = 0; l < cfg.layers; ++l) {
      std::string e = "enc" + std::to_string(l);
      for (long i = 0; i < src_len_; ++i) {
        row.assign(x.begin() + i * d, x.begin() + (i + 1) * d);
        affine_row(row, p.at(e + ".attn.wk"), p.at(e + ".attn.bk"), k);
        affine_row(row, p.at(e + ".attn.wv"), p.at(e + ".attn.bv"), v);
        std::copy(k.begin(), k.end(), keys.begin() + i * d);
        std::copy(v.begin(), v.end(), vals.begin() + i * d);
      }
      std::vector<float> next(x.size());
      for (long i = 0; i < src_len_; ++i) {
        row.assign(x.begin() + i * d, x.begin() + (i + 1) * d);
        affine_row(row, p.at(e + ".attn.wq"), p.at(e + ".attn.bq"), q);
        attend_row(q, keys, vals, src_len_, cfg.heads, d, tmp);
        affine_row(tmp, p.at(e + ".attn.wo"), p.at(e + ".attn.bo"), attn_out);
        add_inplace(attn_out, row);
        layer_norm_row(attn_out, p.at(e + ".ln1.g"), p.at(e + ".ln1.b"));
        affine_row(attn_out, p.at(e + ".ffn.w1"), p.at(e + ".ffn.b1"), tmp);
        for (auto& vv : tmp) vv = vv > 0.0f ? vv : 0.0f;
        affine_row(tmp, p.at(e + ".ffn.w2"), p.at(e + ".ffn.b2"), q);
        add_inplace(q, attn_out);
        layer_norm_row(q, p.at(e + ".ln2.g"), p.at(e + ".ln2.b"));
        std::copy(q.begin(), q.end(), next.begin() + i * d);
      }
      x = std::move(next);
    }
    enc_out_ = std::move(x);
  }

  // Precompute cross-attention keys/values per decoder layer.
  const auto& p = model.params;
  cross_k_.resize(static_cast<size_t>(cfg.layers));
  cross_v_.resize(static_cast<size_t>(cfg.layers));
  self_k_.resize(static_cast<size_t>(cfg.layers));
  self_v_.resize(static_cast<size_t>(cfg.layers));
  std::vector<float> row(static_cast<size_t>(d)), k, v;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string dl = "dec" + std::to_string(l);
    cross_k_[static_cast<size_t>(l)].resize(static_cast<size_t>(src_len_ * d));
    cross_v_[static_cast<size_t>(l)].resize(static_cast<size_t>(src_len_ * d));
    for (long i = 0; i < src_len_; ++i) {
      row.assign(enc_out_.begin() + i * d, enc_out_.begin() + (i + 1) * d);
      affine_row(row, p.at(dl + ".cross.wk"), p.at(dl + ".cross.bk"), k);
      affine_row(row, p.at(dl + ".cross.wv"), p.at(dl + ".cross.bv"), v);
      std::copy(k.begin(), k.end(), cross_k_[static_cast<size_t>(l)].begin() + i * d);
      std::copy(v.begin(), v.end(), cross_v_[static_cast<size_t>(l)].begin() + i * d);
    }
  }
}

std::vector<float> DecoderSession::step(int token) {
  const auto& cfg = model_->cfg;
  const auto& p = model_->params;
  long d = cfg.model_dim;
  if (pos_ >= cfg.max_positions)
    throw ValueError("decode: target length exceeds max positions " +
                     std::to_string(cfg.max_positions));
  if (token < 0 || token >= model_->tgt_vocab_size)
    throw ValueError("decode: token id out of range");

  const float emb_scale = std::sqrt(float(d));
  const auto& table = p.at("tgt_embed").data();
  const auto& pos_table = p.at("dec_pos").data();
  std::vector<float> x(static_cast<size_t>(d));
  for (long j = 0; j < d; ++j)
    x[static_cast<size_t>(j)] = table[static_cast<size_t>(token * d + j)] * emb_scale +
                                pos_table[static_cast<size_t>(pos_ * d + j)];

  std::vector<float> q, k, v, tmp, attn_out;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string dl = "dec" + std::to_string(l);
    auto& sk = self_k_[static_cast<size_t>(l)];
    auto& sv = self_v_[static_cast<size_t>(l)];
    affine_row(x, p.at(dl + ".self.wq"), p.at(dl + ".self.bq"), q);
    affine_row(x, p.at(dl + ".self.wk"), p.at(dl + ".self.bk"), k);
    affine_row(x, p.at(dl + ".self.wv"), p.at(dl + ".self.bv"), v);
    sk.insert(sk.end(), k.begin(), k.end());
    sv.insert(sv.end(), v.begin(), v.end());
    attend_row(q, sk, sv, pos_ + 1, cfg.heads, d, tmp);
    affine_row(tmp, p.at(dl + ".self.wo"), p.at(dl + ".self.bo"), attn_out);
    add_inplace(attn_out, x);
    layer_norm_row(attn_out, p.at(dl + ".ln1.g"), p.at(dl + ".ln1.b"));

    affine_row(attn_out, p.at(dl + ".cross.wq"), p.at(dl + ".cross.bq"), q);
    attend_row(q, cross_k_[static_cast<size_t>(l)], cross_v_[static_cast<size_t>(l)], src_len_,
               cfg.heads, d, tmp);
    affine_row(tmp, p.at(dl + ".cross.wo"), p.at(dl + ".cross.bo"), k);
    add_inplace(k, attn_out);
    layer_norm_row(k, p.at(dl + ".ln2.g"), p.at(dl + ".ln2.b"));

    affine_row(k, p.at(dl + ".ffn.w1"), p.at(dl + ".ffn.b1"), tmp);
    for (auto& vv : tmp) vv = vv > 0.0f ? vv : 0.0f;
    affine_row(tmp, p.at(dl + ".ffn.w2"), p.at(dl + ".ffn.b2"), v);
    add_inplace(v, k);
    layer_norm_row(v, p.at(dl + ".ln3.g"), p.at(dl + ".ln3.b"));
    x = v;
  }
  ++pos_;

  // Tied output projection: logits over the target vocabulary.
  const auto& out_table = model_->output_table().data();
  long vocab = model_->tgt_vocab_size;
  std::vector<float> logits(static_cast<size_t>(vocab));
  for (long i = 0; i < vocab; ++i) {
    const float* rowp = out_table.data() + i * d;
    float acc = 0.0f;
    for (long j = 0; j < d; ++j) acc += x[static_cast<size_t>(j)] * rowp[j];
    logits[static_cast<size_t>(i)] = acc;
  }
  softmax_inplace(logits);
  return logits;
}

int sample_from_row(const std::vector<float>& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += double(probs[i]);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

double hypothesis_score(double sum_log_prob, long length, double len_penalty) {
  if (length < 1) length = 1;
  return sum_log_prob / std::pow(double(length), len_penalty);
}

namespace {

int argmax_lowest_id(const std::vector<float>& probs) {
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

double floored_logp(float p) {
  return std::log(std::max(double(p), kProbFloor));
}

}  // namespace

DecodeResult greedy_decode(const Model<float>& model, const std::vector<int>& src_ids,
                           int max_len) {
  if (max_len < 1) throw ValueError("greedy_decode: max_len must be >= 1");
  DecoderSession session(model, src_ids);
  DecodeResult res;
  double sum_logp = 0.0;
  long emitted = 0;
  std::vector<float> probs = session.step(Vocabulary::kBos);
  while (true) {
    int tok = argmax_lowest_id(probs);
    sum_logp += floored_logp(probs[static_cast<size_t>(tok)]);
    ++emitted;
    if (tok == Vocabulary::kEos) break;
    res.ids.push_back(tok);
    res.token_probs.push_back(probs[static_cast<size_t>(tok)]);
    if (emitted >= max_len) break;
    probs = session.step(tok);
  }
  res.score = hypothesis_score(sum_logp, emitted, 1.0);
  return res;
}

DecodeResult beam_decode(const Model<float>& model, const std::vector<int>& src_ids, int beam,
                         double len_penalty, int max_len) {
  return beam_search(DecoderSession(model, src_ids), beam, len_penalty, max_len);
}

DecodeResult sample_decode(const Model<float>& model, const std::vector<int>& src_ids,
                           uint64_t seed, int max_len) {
  if (max_len < 1) throw ValueError("sample_decode: max_len must be >= 1");
  Rng rng(mix_seed(seed, 0x5a3d));
  DecoderSession session(model, src_ids);
  DecodeResult res;
  double sum_logp = 0.0;
  long emitted = 0;
  std::vector<float> probs = session.step(Vocabulary::kBos);
  while (true) {
    int tok = sample_from_row(probs, rng);
    sum_logp += floored_logp(probs[static_cast<size_t>(tok)]);
    ++emitted;
    if (tok == Vocabulary::kEos) break;
    res.ids.push_back(tok);
    res.token_probs.push_back(probs[static_cast<size_t>(tok)]);
    if (emitted >= max_len) break;
    probs = session.step(tok);
  }
  res.score = hypothesis_score(sum_logp, emitted, 1.0);
  return res;
}

DecodeResult decode(const Model<float>& model, const std::vector<int>& src_ids,
                    const DecodeParams& params) {
  switch (params.method) {
    case DecodeParams::Method::Greedy:
      return greedy_decode(model, src_ids, params.max_len);
    case DecodeParams::Method::Beam:
      return beam_decode(model, src_ids, params.beam, params.len_penalty, params.max_len);
    default:
      return sample_decode(model, src_ids, params.seed, params.max_len);
  }
}

DecodeResult Translator::decode_sentence(const std::string& sentence,
                                         const DecodeParams& params) const {
  std::vector<int> src_ids = source->encode(sentence);
  if (src_ids.empty()) src_ids.push_back(Vocabulary::kUnk);
  return nmt::decode(*model, src_ids, params);
}

std::string Translator::translate(const std::string& sentence, const DecodeParams& params) const {
  return decode_ids(decode_sentence(sentence, params).ids, *target_vocab);
}

std::vector<std::string> translate_corpus(const Translator& tr,
                                          const std::vector<std::string>& sentences,
                                          const DecodeParams& params, int threads) {
  std::vector<std::string> out(sentences.size());
  if (threads <= 1) {
    for (size_t i = 0; i < sentences.size(); ++i) out[i] = tr.translate(sentences[i], params);
    return out;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> cursor{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (size_t i = cursor.fetch_add(1); i < sentences.size(); i = cursor.fetch_add(1))
        out[i] = tr.translate(sentences[i], params);
    });
  for (auto& th : pool) th.join();
  return out;
}

int env_thread_count() {
  const char* env = std::getenv("NMT_THREADS");
  if (env == nullptr) return 1;
  int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

}  // namespace nmt
