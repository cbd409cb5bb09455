#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coguide/tensor.hpp"

namespace coguide {

// One utterance: whitespace tokens, BIO slot tags, sentence-level intent set.
struct Sample {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_tags;
  std::set<std::string> intents;

  bool operator==(const Sample&) const = default;
};

// BIO tag decomposition. Anything that is not "B-x"/"I-x" is treated as O.
inline bool split_bio(const std::string& tag, char& prefix, std::string& type) {
  if (tag.size() >= 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    prefix = tag[0];
    type = tag.substr(2);
    return true;
  }
  prefix = 'O';
  type.clear();
  return false;
}

inline bool is_valid_slot_tag(const std::string& tag) {
  if (tag == "O") return true;
  char p;
  std::string ty;
  return split_bio(tag, p, ty) && !ty.empty();
}

// Soft-validation: returns human-readable issues (I-tag without a matching
// B-chain). Hard invariants (length mismatch, bad tag syntax, empty intents)
// throw instead: noisy chains are real-data noise, the rest is malformed input.
inline std::vector<std::string> validate_sample(const Sample& s) {
  require(!s.tokens.empty(), "sample has no tokens");
  require(s.tokens.size() == s.slot_tags.size(), "token/slot length mismatch");
  require(!s.intents.empty(), "sample has no intents");
  for (const auto& tag : s.slot_tags)
    require(is_valid_slot_tag(tag), "invalid slot tag '" + tag + "'");

  std::vector<std::string> issues;
  std::string prev_type;
  bool prev_in_span = false;
  for (std::size_t i = 0; i < s.slot_tags.size(); ++i) {
    char p;
    std::string ty;
    split_bio(s.slot_tags[i], p, ty);
    if (p == 'I' && !(prev_in_span && prev_type == ty))
      issues.push_back("token " + std::to_string(i) + ": I-" + ty + " without preceding B-" + ty);
    prev_in_span = (p == 'B' || p == 'I');
    prev_type = ty;
  }
  return issues;
}

namespace detail {
inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace detail

// Block format: "token<ws>tag" lines, then one line of '#'-joined intents,
// blocks separated by a blank line. Trailing blank line optional.
inline std::vector<Sample> parse_dataset(const std::string& text) {
  std::vector<std::pair<int, std::string>> lines;
  {
    std::istringstream in(text);
    std::string l;
    int no = 0;
    while (std::getline(in, l)) lines.emplace_back(++no, l);
  }
  std::size_t lo = 0, hi = lines.size();
  while (lo < hi && detail::trim(lines[lo].second).empty()) ++lo;
  while (hi > lo && detail::trim(lines[hi - 1].second).empty()) --hi;

  std::vector<Sample> samples;
  std::vector<std::pair<int, std::string>> block;  // (line number, content)

  auto flush = [&](int at_line) {
    if (block.empty())
      throw std::runtime_error("parse error at line " + std::to_string(at_line) +
                               ": empty block");
    Sample s;
    for (std::size_t i = 0; i + 1 < block.size(); ++i) {
      auto fields = detail::split_ws(block[i].second);
      if (fields.size() != 2)
        throw std::runtime_error("parse error at line " + std::to_string(block[i].first) +
                                 ": expected 'token slot_tag', got '" + block[i].second + "'");
      if (!is_valid_slot_tag(fields[1]))
        throw std::runtime_error("parse error at line " + std::to_string(block[i].first) +
                                 ": invalid slot tag '" + fields[1] + "'");
      s.tokens.push_back(fields[0]);
      s.slot_tags.push_back(fields[1]);
    }
    const auto& [intent_line_no, intent_line] = block.back();
    if (detail::split_ws(intent_line).size() != 1)
      throw std::runtime_error("parse error at line " + std::to_string(intent_line_no) +
                               ": expected intent line, got '" + intent_line + "'");
    std::stringstream in(intent_line);
    std::string part;
    while (std::getline(in, part, '#')) {
      part = detail::trim(part);
      if (!part.empty()) s.intents.insert(part);
    }
    if (s.tokens.empty())
      throw std::runtime_error("parse error at line " + std::to_string(intent_line_no) +
                               ": block has no token lines");
    if (s.intents.empty())
      throw std::runtime_error("parse error at line " + std::to_string(intent_line_no) +
                               ": block has no intent labels");
    samples.push_back(std::move(s));
    block.clear();
  };

  for (std::size_t i = lo; i < hi; ++i) {
    const auto& [no, line] = lines[i];
    if (detail::trim(line).empty())
      flush(no);
    else
      block.emplace_back(no, line);
  }
  if (!block.empty()) flush(lines.empty() ? 0 : lines[hi - 1].first);
  return samples;
}

// Inverse of parse_dataset. parse_dataset(serialize_dataset(s)) == s.
inline std::string serialize_dataset(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      out += s.tokens[i] + " " + s.slot_tags[i] + "\n";
    std::string joined;
    for (const auto& it : s.intents) {
      if (!joined.empty()) joined += "#";
      joined += it;
    }
    out += joined + "\n\n";
  }
  return out;
}

// Dense bijective string<->id maps built from the training split. Word ids
// reserve 0 for UNK; label sets are closed.
struct Vocabularies {
  static constexpr int kUnkId = 0;
  static constexpr const char* kUnkToken = "<unk>";

  std::map<std::string, int> word_to_id;
  std::vector<std::string> id_to_word;
  std::map<std::string, int> slot_to_id;
  std::vector<std::string> id_to_slot;
  std::map<std::string, int> intent_to_id;
  std::vector<std::string> id_to_intent;

  int n_words() const { return static_cast<int>(id_to_word.size()); }
  int n_slots() const { return static_cast<int>(id_to_slot.size()); }
  int n_intents() const { return static_cast<int>(id_to_intent.size()); }

  int word_id(const std::string& w) const {
    auto it = word_to_id.find(w);
    return it == word_to_id.end() ? kUnkId : it->second;
  }
  int slot_id(const std::string& tag) const {
    auto it = slot_to_id.find(tag);
    require(it != slot_to_id.end(), "unknown slot tag '" + tag + "' (label set is closed)");
    return it->second;
  }
  int intent_id(const std::string& label) const {
    auto it = intent_to_id.find(label);
    require(it != intent_to_id.end(), "unknown intent '" + label + "' (label set is closed)");
    return it->second;
  }
};

// Sorted lexicographic index assignment: permuting the sample order cannot
// change the maps.
inline Vocabularies build_vocab(const std::vector<Sample>& samples, bool lowercase = false) {
  require(!samples.empty(), "build_vocab: empty sample list");
  std::set<std::string> words, slots, intents;
  for (const auto& s : samples) {
    for (const auto& w : s.tokens) {
      std::string t = w;
      if (lowercase)
        std::transform(t.begin(), t.end(), t.begin(),
                       [](unsigned char c) { return std::tolower(c); });
      words.insert(t);
    }
    for (const auto& tag : s.slot_tags) slots.insert(tag);
    for (const auto& it : s.intents) intents.insert(it);
  }
  Vocabularies v;
  v.word_to_id[Vocabularies::kUnkToken] = Vocabularies::kUnkId;
  v.id_to_word.push_back(Vocabularies::kUnkToken);
  for (const auto& w : words) {
    if (w == Vocabularies::kUnkToken) continue;
    v.word_to_id[w] = static_cast<int>(v.id_to_word.size());
    v.id_to_word.push_back(w);
  }
  for (const auto& s : slots) {
    v.slot_to_id[s] = static_cast<int>(v.id_to_slot.size());
    v.id_to_slot.push_back(s);
  }
  for (const auto& it : intents) {
    v.intent_to_id[it] = static_cast<int>(v.id_to_intent.size());
    v.id_to_intent.push_back(it);
  }
  return v;
}

struct EncodedSample {
  std::vector<int> word_ids;
  std::vector<int> slot_ids;
  Tensor intent_multi_hot;         // [N_I], this is l_I
  std::vector<Tensor> slot_one_hots;  // n of [N_S], these are l_S per token
};

inline EncodedSample encode_sample(const Sample& s, const Vocabularies& v,
                                   bool lowercase = false) {
  validate_sample(s);
  EncodedSample e;
  for (const auto& w : s.tokens) {
    std::string t = w;
    if (lowercase)
      std::transform(t.begin(), t.end(), t.begin(),
                     [](unsigned char c) { return std::tolower(c); });
    e.word_ids.push_back(v.word_id(t));
  }
  e.intent_multi_hot = Tensor({v.n_intents()});
  for (const auto& it : s.intents) e.intent_multi_hot[v.intent_id(it)] = 1.0;
  for (const auto& tag : s.slot_tags) {
    int id = v.slot_id(tag);
    e.slot_ids.push_back(id);
    Tensor oh({v.n_slots()});
    oh[id] = 1.0;
    e.slot_one_hots.push_back(std::move(oh));
  }
  return e;
}

// One sample per line: {"tokens": [...], "slots": [...], "intents": [...]}.
inline std::string to_jsonl(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::json j{{"tokens", s.tokens},
                     {"slots", s.slot_tags},
                     {"intents", std::vector<std::string>(s.intents.begin(), s.intents.end())}};
    out += j.dump() + "\n";
  }
  return out;
}

inline nlohmann::json vocab_to_json(const Vocabularies& v) {
  return nlohmann::json{{"words", v.id_to_word}, {"slots", v.id_to_slot},
                        {"intents", v.id_to_intent}};
}

inline Vocabularies vocab_from_json(const nlohmann::json& j) {
  Vocabularies v;
  v.id_to_word = j.at("words").get<std::vector<std::string>>();
  v.id_to_slot = j.at("slots").get<std::vector<std::string>>();
  v.id_to_intent = j.at("intents").get<std::vector<std::string>>();
  require(!v.id_to_word.empty() && v.id_to_word[0] == Vocabularies::kUnkToken,
          "vocab file: word id 0 must be the UNK token");
  for (std::size_t i = 0; i < v.id_to_word.size(); ++i)
    v.word_to_id[v.id_to_word[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < v.id_to_slot.size(); ++i)
    v.slot_to_id[v.id_to_slot[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < v.id_to_intent.size(); ++i)
    v.intent_to_id[v.id_to_intent[i]] = static_cast<int>(i);
  return v;
}

// Deterministic synthetic corpus with intent<->slot correlations built in:
// each template k has trigger words, slot-value words and a dedicated slot
// type arg<k>, so the k-th intent predicts the k-th slot span and vice versa.
inline std::vector<Sample> generate_synthetic(int n_templates, int n_samples,
                                              unsigned long seed) {
  require(n_templates >= 2, "generate_synthetic: need at least 2 templates");
  require(n_samples >= 1, "generate_synthetic: need at least 1 sample");
  std::mt19937_64 rng(seed);
  auto rand_int = [&](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<unsigned long>(hi - lo + 1));
  };
  auto rand01 = [&]() { return (rng() >> 11) * (1.0 / 9007199254740992.0); };

  const std::vector<std::string> fillers = {"please", "the", "now", "then", "also"};
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    double r = rand01();
    int n_intents = r < 0.45 ? 1 : (r < 0.85 ? 2 : 3);
    n_intents = std::min(n_intents, n_templates);
    std::vector<int> pool(static_cast<std::size_t>(n_templates));
    for (int k = 0; k < n_templates; ++k) pool[static_cast<std::size_t>(k)] = k;
    for (int k = n_templates - 1; k > 0; --k)
      std::swap(pool[static_cast<std::size_t>(k)],
                pool[static_cast<std::size_t>(rand_int(0, k))]);
    pool.resize(static_cast<std::size_t>(n_intents));

    Sample sample;
    for (int k : pool) {
      std::string kk = std::to_string(k);
      sample.intents.insert("intent" + kk);
      if (rand01() < 0.5) {
        sample.tokens.push_back(fillers[static_cast<std::size_t>(
            rand_int(0, static_cast<int>(fillers.size()) - 1))]);
        sample.slot_tags.push_back("O");
      }
      sample.tokens.push_back("op" + kk + (rand01() < 0.5 ? "a" : "b"));
      sample.slot_tags.push_back("O");
      int span_len = rand_int(1, 2);
      for (int j = 0; j < span_len; ++j) {
        sample.tokens.push_back("val" + kk + "_" + std::to_string(rand_int(0, 2)));
        sample.slot_tags.push_back((j == 0 ? "B-arg" : "I-arg") + kk);
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace coguide
