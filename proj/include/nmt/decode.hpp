#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/subword.hpp"

// Inference-side decoding: greedy, beam (sum-log-prob / length^penalty),
// and ancestral sampling, all over an incremental decoder with cached
// self-attention keys/values. A loaded model is immutable here and may
// serve concurrent decoders.

namespace nmt {

struct DecodeParams {
  enum class Method { Greedy, Beam, Sample };
  Method method = Method::Beam;
  int beam = 5;
  double len_penalty = 1.0;
  int max_len = 64;
  uint64_t seed = 0;  // sampling only
};

DecodeParams::Method decode_method_from_name(const std::string& name);
const char* decode_method_name(DecodeParams::Method m);

struct DecodeResult {
  std::vector<int> ids;            // emitted tokens, eos stripped
  std::vector<float> token_probs;  // per-token probability at generation time (tau=1)
  double score = 0.0;              // sum log prob / length^penalty over emitted+eos
};

// Incremental decoder state for one source sentence: the encoder runs once,
// cross-attention keys/values are precomputed, and each step() feeds one
// target token and returns the next-token distribution.
class DecoderSession {
 public:
  DecoderSession(const Model<float>& model, const std::vector<int>& src_ids);

  // Feeds `token` (bos first) at the next position; returns the distribution
  // over the following token.
  std::vector<float> step(int token);

  long position() const { return pos_; }

 private:
  const Model<float>* model_;
  long src_len_ = 0;
  std::vector<float> enc_out_;                  // (S, d)
  std::vector<std::vector<float>> cross_k_;     // per layer: (S, d), head-major rows
  std::vector<std::vector<float>> cross_v_;
  std::vector<std::vector<float>> self_k_;      // per layer: growing (t, d)
  std::vector<std::vector<float>> self_v_;
  long pos_ = 0;
};

DecodeResult greedy_decode(const Model<float>& model, const std::vector<int>& src_ids,
                           int max_len);
DecodeResult beam_decode(const Model<float>& model, const std::vector<int>& src_ids, int beam,
                         double len_penalty, int max_len);
DecodeResult sample_decode(const Model<float>& model, const std::vector<int>& src_ids,
                           uint64_t seed, int max_len);
DecodeResult decode(const Model<float>& model, const std::vector<int>& src_ids,
                    const DecodeParams& params);

// Draws one token from a distribution row by inverse-CDF walk.
int sample_from_row(const std::vector<float>& probs, Rng& rng);

// Hypothesis score used by beam_decode: sum-log-prob / length^penalty.
double hypothesis_score(double sum_log_prob, long length, double len_penalty);

// Beam search over any copyable session with step(token) -> next-token
// distribution. Candidates are ranked by cumulative log probability with
// deterministic ties (token id, then hypothesis order); eos is absorbed from
// the top `beam` candidates; the best finished hypothesis under
// hypothesis_score wins, ties broken by token-id order.
template <typename Session>
DecodeResult beam_search(Session root, int beam, double len_penalty, int max_len) {
  if (beam < 1) throw ValueError("beam_search: beam must be >= 1");
  if (max_len < 1) throw ValueError("beam_search: max_len must be >= 1");

  struct Hyp {
    std::shared_ptr<Session> session;
    std::vector<int> ids;
    std::vector<float> probs;
    std::vector<float> next;
    double sum_logp = 0.0;
  };
  std::vector<Hyp> live(1);
  live[0].session = std::make_shared<Session>(std::move(root));
  live[0].next = live[0].session->step(Vocabulary::kBos);

  struct Finished {
    std::vector<int> ids;
    std::vector<float> probs;
    double score;
  };
  std::vector<Finished> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      size_t hyp;
      int token;
      double sum_logp;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * live[0].next.size());
    for (size_t h = 0; h < live.size(); ++h)
      for (size_t t = 0; t < live[h].next.size(); ++t)
        cands.push_back({h, static_cast<int>(t),
                         live[h].sum_logp +
                             std::log(std::max(double(live[h].next[t]), kProbFloor))});
    size_t keep = std::min(cands.size(), static_cast<size_t>(beam) * 2);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.sum_logp != b.sum_logp) return a.sum_logp > b.sum_logp;
                        if (a.token != b.token) return a.token < b.token;
                        return a.hyp < b.hyp;
                      });

    std::vector<Hyp> next_live;
    for (size_t c = 0; c < keep && next_live.size() < static_cast<size_t>(beam); ++c) {
      const Cand& cand = cands[c];
      const Hyp& src = live[cand.hyp];
      if (cand.token == Vocabulary::kEos) {
        if (c < static_cast<size_t>(beam)) {
          long len = static_cast<long>(src.ids.size()) + 1;
          finished.push_back(
              {src.ids, src.probs, hypothesis_score(cand.sum_logp, len, len_penalty)});
        }
        continue;
      }
      Hyp h;
      h.ids = src.ids;
      h.ids.push_back(cand.token);
      h.probs = src.probs;
      h.probs.push_back(src.next[static_cast<size_t>(cand.token)]);
      h.sum_logp = cand.sum_logp;
      if (step + 1 < max_len) {
        h.session = std::make_shared<Session>(*src.session);
        h.next = h.session->step(cand.token);
      }
      next_live.push_back(std::move(h));
    }
    live = std::move(next_live);
  }

  for (const auto& h : live)
    finished.push_back(
        {h.ids, h.probs, hypothesis_score(h.sum_logp, static_cast<long>(h.ids.size()), len_penalty)});
  if (finished.empty()) return DecodeResult{};

  const Finished* best = &finished[0];
  for (const auto& f : finished)
    if (f.score > best->score || (f.score == best->score && f.ids < best->ids)) best = &f;
  DecodeResult res;
  res.ids = best->ids;
  res.token_probs = best->probs;
  res.score = best->score;
  return res;
}

// Text-level translation: encode with the source codec, decode ids with the
// target vocabulary.
struct Translator {
  const Model<float>* model = nullptr;
  const Codec* source = nullptr;
  const Vocabulary* target_vocab = nullptr;

  DecodeResult decode_sentence(const std::string& sentence, const DecodeParams& params) const;
  std::string translate(const std::string& sentence, const DecodeParams& params) const;
};

// Translates all sentences, preserving input order; shards across `threads`
// when > 1 (thread count comes from the NMT_THREADS environment variable at
// the CLI level).
std::vector<std::string> translate_corpus(const Translator& tr,
                                          const std::vector<std::string>& sentences,
                                          const DecodeParams& params, int threads = 1);

int env_thread_count();

}  // namespace nmt
