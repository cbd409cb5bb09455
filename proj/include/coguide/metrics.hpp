#pragma once

#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "coguide/corpus.hpp"

namespace coguide {

struct EvalReport {
  double intent_acc = 0.0;
  double slot_precision = 0.0;
  double slot_recall = 0.0;
  double slot_f1 = 0.0;
  double overall_acc = 0.0;
  std::size_t samples = 0;
  std::size_t gold_spans = 0;
  std::size_t pred_spans = 0;
  std::size_t matched_spans = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "samples        " << samples << "\n"
       << "intent acc     " << intent_acc << "\n"
       << "slot precision " << slot_precision << " (" << matched_spans << "/" << pred_spans
       << ")\n"
       << "slot recall    " << slot_recall << " (" << matched_spans << "/" << gold_spans
       << ")\n"
       << "slot f1        " << slot_f1 << "\n"
       << "overall acc    " << overall_acc << "\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"samples", samples},
                          {"intent_acc", intent_acc},
                          {"slot_precision", slot_precision},
                          {"slot_recall", slot_recall},
                          {"slot_f1", slot_f1},
                          {"overall_acc", overall_acc},
                          {"gold_spans", gold_spans},
                          {"pred_spans", pred_spans},
                          {"matched_spans", matched_spans}};
  }
};

// (start, end-exclusive, type) spans from a BIO sequence, CoNLL-relaxed: an
// I-tag without a matching open span starts a new span, so extraction never
// fails on noisy sequences.
inline std::vector<std::tuple<int, int, std::string>> extract_spans(
    const std::vector<std::string>& tags) {
  std::vector<std::tuple<int, int, std::string>> spans;
  int start = -1;
  std::string open_type;
  auto close = [&](int end) {
    if (start >= 0) spans.emplace_back(start, end, open_type);
    start = -1;
    open_type.clear();
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    char p;
    std::string ty;
    split_bio(tags[static_cast<std::size_t>(i)], p, ty);
    if (p == 'B' || (p == 'I' && !(start >= 0 && open_type == ty))) {
      close(i);
      start = i;
      open_type = ty;
    } else if (p == 'O') {
      close(i);
    }
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

// Fraction of samples whose predicted intent set equals the gold set.
inline double intent_accuracy(const std::vector<std::set<std::string>>& preds,
                              const std::vector<std::set<std::string>>& golds) {
  require(preds.size() == golds.size(), "intent_accuracy: size mismatch");
  require(!preds.empty(), "intent_accuracy: empty corpus");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

struct SlotF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t gold_spans = 0;
  std::size_t pred_spans = 0;
  std::size_t matched = 0;
};

// Micro-averaged span-level F1: a predicted span counts iff an identical
// (start, end, type) gold span exists in the same sentence.
inline SlotF1 slot_f1(const std::vector<std::vector<std::string>>& pred_tags,
                      const std::vector<std::vector<std::string>>& gold_tags) {
  require(pred_tags.size() == gold_tags.size(), "slot_f1: size mismatch");
  SlotF1 out;
  for (std::size_t s = 0; s < pred_tags.size(); ++s) {
    require(pred_tags[s].size() == gold_tags[s].size(), "slot_f1: token count mismatch");
    auto pred = extract_spans(pred_tags[s]);
    auto gold = extract_spans(gold_tags[s]);
    std::set<std::tuple<int, int, std::string>> gold_set(gold.begin(), gold.end());
    out.pred_spans += pred.size();
    out.gold_spans += gold.size();
    for (const auto& span : pred)
      if (gold_set.count(span)) ++out.matched;
  }
  out.precision = out.pred_spans ? static_cast<double>(out.matched) / out.pred_spans : 0.0;
  out.recall = out.gold_spans ? static_cast<double>(out.matched) / out.gold_spans : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

// Token-level micro F1 over non-O tags, for diagnostics only.
inline SlotF1 slot_token_f1(const std::vector<std::vector<std::string>>& pred_tags,
                            const std::vector<std::vector<std::string>>& gold_tags) {
  require(pred_tags.size() == gold_tags.size(), "slot_token_f1: size mismatch");
  SlotF1 out;
  for (std::size_t s = 0; s < pred_tags.size(); ++s) {
    for (std::size_t i = 0; i < pred_tags[s].size(); ++i) {
      bool pred_tagged = pred_tags[s][i] != "O";
      bool gold_tagged = gold_tags[s][i] != "O";
      if (pred_tagged) ++out.pred_spans;
      if (gold_tagged) ++out.gold_spans;
      if (pred_tagged && gold_tagged && pred_tags[s][i] == gold_tags[s][i]) ++out.matched;
    }
  }
  out.precision = out.pred_spans ? static_cast<double>(out.matched) / out.pred_spans : 0.0;
  out.recall = out.gold_spans ? static_cast<double>(out.matched) / out.gold_spans : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

// A sample counts iff the intent set matches exactly and every token's slot
// tag matches exactly.
inline double overall_accuracy(const std::vector<std::set<std::string>>& pred_intents,
                               const std::vector<std::vector<std::string>>& pred_tags,
                               const std::vector<std::set<std::string>>& gold_intents,
                               const std::vector<std::vector<std::string>>& gold_tags) {
  require(pred_intents.size() == gold_intents.size() && pred_tags.size() == gold_tags.size() &&
              pred_intents.size() == pred_tags.size(),
          "overall_accuracy: size mismatch");
  require(!pred_intents.empty(), "overall_accuracy: empty corpus");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred_intents.size(); ++i)
    if (pred_intents[i] == gold_intents[i] && pred_tags[i] == gold_tags[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred_intents.size());
}

inline EvalReport make_report(const std::vector<std::set<std::string>>& pred_intents,
                              const std::vector<std::vector<std::string>>& pred_tags,
                              const std::vector<std::set<std::string>>& gold_intents,
                              const std::vector<std::vector<std::string>>& gold_tags) {
  EvalReport r;
  r.samples = pred_intents.size();
  r.intent_acc = intent_accuracy(pred_intents, gold_intents);
  SlotF1 f = slot_f1(pred_tags, gold_tags);
  r.slot_precision = f.precision;
  r.slot_recall = f.recall;
  r.slot_f1 = f.f1;
  r.gold_spans = f.gold_spans;
  r.pred_spans = f.pred_spans;
  r.matched_spans = f.matched;
  r.overall_acc = overall_accuracy(pred_intents, pred_tags, gold_intents, gold_tags);
  return r;
}

}  // namespace coguide
