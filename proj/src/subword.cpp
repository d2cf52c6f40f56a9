#include "nmt/subword.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace nmt {

namespace {

const char* kEndOfWord = "</w>";
const char* kSpecials[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_special(const std::string& s) {
  for (const char* sp : kSpecials)
    if (s == sp) return true;
  return false;
}

// Splits UTF-8 text into codepoint-sized symbols.
std::vector<std::string> utf8_chars(const std::string& word) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < word.size()) {
    unsigned char c = static_cast<unsigned char>(word[i]);
    size_t len = 1;
    if ((c & 0x80) == 0x00)
      len = 1;
    else if ((c & 0xE0) == 0xC0)
      len = 2;
    else if ((c & 0xF0) == 0xE0)
      len = 3;
    else if ((c & 0xF8) == 0xF0)
      len = 4;
    if (i + len > word.size()) len = 1;
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kEndOfWord;
  return syms;
}

std::string pair_key(const std::string& a, const std::string& b) {
  return a + '\x1f' + b;
}

}  // namespace

std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::map<std::string, long> count_words(const std::vector<std::string>& lines) {
  std::map<std::string, long> freq;
  for (const auto& line : lines)
    for (auto& w : split_whitespace(line)) ++freq[w];
  return freq;
}

const std::unordered_map<std::string, int>& BpeModel::ranks() const {
  if (rank_cache_.size() != merges.size()) {
    rank_cache_.clear();
    for (size_t i = 0; i < merges.size(); ++i)
      rank_cache_.emplace(pair_key(merges[i].first, merges[i].second), static_cast<int>(i));
  }
  return rank_cache_;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write merge list: " + path);
  for (const auto& [l, r] : merges) out << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read merge list: " + path);
  BpeModel m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw IoError("malformed merge line in " + path + ": '" + line + "'");
    m.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return m;
}

BpeModel learn_bpe(const std::map<std::string, long>& word_freq, int merge_count) {
  if (word_freq.empty()) throw ValueError("learn_bpe: empty corpus");
  if (merge_count < 0) throw ValueError("learn_bpe: merge_count must be >= 0");

  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) words.emplace_back(word_symbols(w), f);

  BpeModel model;
  for (int step = 0; step < merge_count; ++step) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [syms, f] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;

    // Most frequent pair; map order gives the lexicographically smallest on
    // ties. Merges that would collide with a special token are skipped.
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (is_special(pair.first + pair.second)) continue;
      if (c > best_count) {
        best_count = c;
        best = &pair;
      }
    }
    if (best == nullptr) break;

    const std::string merged = best->first + best->second;
    for (auto& [syms, f] : words) {
      std::vector<std::string> next;
      next.reserve(syms.size());
      size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == best->first && syms[i + 1] == best->second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(next);
    }
    model.merges.push_back(*best);
  }
  return model;
}

std::vector<std::string> bpe_segment(const std::string& word, const BpeModel& model) {
  std::vector<std::string> syms = word_symbols(word);
  if (syms.size() < 2) return syms;
  const auto& ranks = model.ranks();
  while (syms.size() >= 2) {
    int best_rank = INT32_MAX;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = ranks.find(pair_key(syms[i], syms[i + 1]));
      if (it != ranks.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == INT32_MAX) break;
    const auto& [l, r] = model.merges[static_cast<size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(syms.size());
    size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
        next.push_back(l + r);
        i += 2;
      } else {
        next.push_back(syms[i]);
        ++i;
      }
    }
    syms = std::move(next);
  }
  return syms;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw ValueError("vocabulary: id " + std::to_string(id) + " out of range [0," +
                     std::to_string(size()) + ")");
  return id_to_token[static_cast<size_t>(id)];
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, const BpeModel& model,
                             Role role) {
  std::unordered_map<std::string, long> freq;
  std::unordered_map<std::string, std::vector<std::string>> memo;
  for (const auto& line : lines) {
    for (auto& w : split_whitespace(line)) {
      auto it = memo.find(w);
      if (it == memo.end()) it = memo.emplace(w, bpe_segment(w, model)).first;
      for (const auto& s : it->second) ++freq[s];
    }
  }
  std::vector<std::pair<std::string, long>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.role = role;
  for (const char* sp : kSpecials) {
    v.token_to_id.emplace(sp, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(sp);
  }
  for (const auto& [tok, f] : order) {
    if (v.token_to_id.count(tok)) continue;
    v.token_to_id.emplace(tok, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(tok);
  }
  return v;
}

uint64_t Vocabulary::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < id_to_token.size(); ++i) {
    h = fnv1a(id_to_token[i], h);
    h = fnv1a("\t" + std::to_string(i) + "\n", h);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  for (size_t i = 0; i < id_to_token.size(); ++i) out << id_to_token[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::string& path, Role role) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary: " + path);
  Vocabulary v;
  v.role = role;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("malformed vocabulary line " + std::to_string(lineno) + " in " + path);
    std::string tok = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.id_to_token.size()))
      throw IoError("non-contiguous vocabulary ids in " + path + " at line " +
                    std::to_string(lineno));
    if (!v.token_to_id.emplace(tok, id).second)
      throw IoError("duplicate token '" + tok + "' in " + path);
    v.id_to_token.push_back(tok);
  }
  for (int i = 0; i < 4; ++i)
    if (v.size() <= i || v.id_to_token[static_cast<size_t>(i)] != kSpecials[i])
      throw IoError("vocabulary " + path + " missing special token " + kSpecials[i] +
                    " at id " + std::to_string(i));
  return v;
}

std::vector<int> encode(const std::string& sentence, const BpeModel& model,
                        const Vocabulary& vocab) {
  std::vector<int> ids;
  for (auto& w : split_whitespace(sentence))
    for (auto& s : bpe_segment(w, model)) ids.push_back(vocab.id(s));
  if (vocab.role == Vocabulary::Role::Target) ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (tok.size() >= 4 && tok.compare(tok.size() - 4, 4, kEndOfWord) == 0) {
      out += tok.substr(0, tok.size() - 4);
      out += ' ';
    } else {
      out += tok;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace nmt
