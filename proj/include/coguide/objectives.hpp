#pragma once

#include <deque>
#include <vector>

#include "coguide/model.hpp"
#include "coguide/tape.hpp"

namespace coguide {

constexpr double kProbEps = 1e-12;

// ---- supervised losses ----

// Token-level multi-label cross entropy over both stages, gold broadcast to
// every token. Negated so the value is minimized and non-negative.
inline Var intent_loss(Tape& t, const Tensor& gold_multi_hot, const std::vector<Var>& y0,
                       const std::vector<Var>& y1) {
  Var gold = t.constant(gold_multi_hot);
  Tensor inv = gold_multi_hot;
  for (std::int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0 - inv[i];
  Var gold_inv = t.constant(inv);
  Tensor ones_t(gold_multi_hot.shape());
  for (std::int64_t i = 0; i < ones_t.numel(); ++i) ones_t[i] = 1.0;
  Var ones = t.constant(ones_t);

  std::vector<Var> terms;
  for (const auto* stage : {&y0, &y1}) {
    for (Var y : *stage) {
      Var yc = t.clamp(y, kProbEps, 1.0 - kProbEps);
      terms.push_back(t.dot(gold, t.log(yc)));
      terms.push_back(t.dot(gold_inv, t.log(t.sub(ones, yc))));
    }
  }
  return t.scale(t.add_n(terms), -1.0);
}

// Token-level cross entropy against gold one-hots over both stages, negated.
inline Var slot_loss(Tape& t, const std::vector<Tensor>& gold_one_hots,
                     const std::vector<Var>& y0, const std::vector<Var>& y1) {
  require(gold_one_hots.size() == y0.size() && y0.size() == y1.size(),
          "slot_loss: length mismatch");
  std::vector<Var> terms;
  for (const auto* stage : {&y0, &y1}) {
    for (std::size_t i = 0; i < stage->size(); ++i) {
      Var yc = t.clamp((*stage)[i], kProbEps, 1.0 - kProbEps);
      terms.push_back(t.dot(t.constant(gold_one_hots[i]), t.log(yc)));
    }
  }
  return t.scale(t.add_n(terms), -1.0);
}

// Hinge on gold-positive entries: stage-2 probabilities may not fall below
// stage-1's. `gold_per_token[i]` is the gold vector applied at token i (the
// intent task broadcasts one multi-hot; the slot task uses per-token one-hots).
inline Var margin_penalty(Tape& t, const std::vector<Tensor>& gold_per_token,
                          const std::vector<Var>& y0, const std::vector<Var>& y1) {
  require(gold_per_token.size() == y0.size() && y0.size() == y1.size(),
          "margin_penalty: length mismatch");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < y0.size(); ++i)
    terms.push_back(t.dot(t.constant(gold_per_token[i]), t.relu(t.sub(y0[i], y1[i]))));
  return t.add_n(terms);
}

// gamma (L_I + beta_I mp_I) + (1-gamma)(L_S + beta_S mp_S)
inline Var coguiding_objective(Tape& t, Var l_i, Var l_s, Var mp_i, Var mp_s, double gamma,
                               double beta_i, double beta_s) {
  Var intent_part = t.add(l_i, t.scale(mp_i, beta_i));
  Var slot_part = t.add(l_s, t.scale(mp_s, beta_s));
  return t.add(t.scale(intent_part, gamma), t.scale(slot_part, 1.0 - gamma));
}

// ---- sample queues ----

// One past instance: detached stage-1/2 features plus its labels. A push is
// atomic across the seven logical queues, so index alignment holds by
// construction; validation rejects incomplete entries.
struct QueueEntry {
  Tensor u0, u1;               // utterance representations, stage 1/2
  std::vector<Tensor> s0, s1;  // per-word slot-task representations, stage 1/2
  Tensor l_intent;             // multi-hot intent label vector
  std::vector<Tensor> l_slot;  // per-word one-hot slot label vectors
  Tensor l_ss;                 // sentence-level slot label vector

  void validate() const {
    require(u0.numel() > 0 && u1.numel() > 0, "queue entry: missing utterance features");
    require(l_intent.numel() > 0 && l_ss.numel() > 0, "queue entry: missing labels");
    require(!s0.empty() && s0.size() == s1.size() && s0.size() == l_slot.size(),
            "queue entry: misaligned per-word features/labels");
  }
};

class SampleQueues {
 public:
  SampleQueues() = default;
  explicit SampleQueues(int capacity) : capacity_(capacity) {
    require(capacity >= 1, "queue capacity must be >= 1");
  }

  void push(QueueEntry e) {
    e.validate();
    entries_.push_back(std::move(e));
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  int capacity() const { return capacity_; }
  const QueueEntry& at(std::size_t k) const { return entries_.at(k); }

 private:
  int capacity_ = 1;
  std::deque<QueueEntry> entries_;
};

// ---- label helpers ----

inline double label_dot(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "label_dot: shape mismatch");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

// Mean of the one-hot vectors of all non-O tokens; zero vector when the
// utterance is all O (o_slot_id < 0 means no O tag exists in the label set).
inline Tensor sentence_slot_vector(const std::vector<Tensor>& slot_one_hots, int o_slot_id) {
  require(!slot_one_hots.empty(), "sentence_slot_vector: no tokens");
  Tensor out(slot_one_hots[0].shape());
  int count = 0;
  for (const auto& oh : slot_one_hots) {
    if (o_slot_id >= 0 && oh[o_slot_id] == 1.0) continue;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += oh[i];
    ++count;
  }
  if (count > 0)
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= count;
  return out;
}

namespace detail {
// -sum_k mu_k log( e^{s_k} / sum_j e^{s_j} ) over the given similarity vars;
// mu is a plain-number weight vector that already sums to 1.
inline Var weighted_info_nce(Tape& t, const std::vector<Var>& sims,
                             const std::vector<double>& mu) {
  Var s = t.concat(sims);
  Var log_z = t.log(t.sum(t.exp(s)));
  Var centered = t.sub_bs(s, log_z);
  return t.scale(t.dot(t.constant(Tensor::vector(std::vector<double>(mu))), centered), -1.0);
}
}  // namespace detail

// Multi-intent supervised contrastive loss: the anchor utterance is pulled
// toward queued utterances in proportion to intent-label overlap. Joint-label
// guidance (stage 2) adds lambda^2 * (l_ss . l_ss_k) to the overlap.
inline Var multi_intent_scl_impl(Tape& t, Var anchor, const SampleQueues& q, int stage,
                                 const Tensor& l_intent, const Tensor* l_ss, double lambda,
                                 double tau) {
  if (q.empty()) return t.constant_scalar(0.0);
  std::size_t K = q.size();
  std::vector<double> overlap(K, 0.0);
  double denom = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const QueueEntry& e = q.at(k);
    overlap[k] = label_dot(l_intent, e.l_intent);
    if (l_ss != nullptr) overlap[k] += lambda * lambda * label_dot(*l_ss, e.l_ss);
    denom += overlap[k];
  }
  if (denom == 0.0) return t.constant_scalar(0.0);  // no positive in the queue
  for (auto& v : overlap) v /= denom;

  std::vector<Var> sims;
  sims.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const QueueEntry& e = q.at(k);
    sims.push_back(cosine_sim(t, anchor, t.constant(stage == 0 ? e.u0 : e.u1), tau));
  }
  return detail::weighted_info_nce(t, sims, overlap);
}

inline Var multi_intent_scl(Tape& t, Var anchor, const SampleQueues& q,
                            const Tensor& l_intent, double tau) {
  return multi_intent_scl_impl(t, anchor, q, 0, l_intent, nullptr, 0.0, tau);
}

inline Var sg_multi_intent_scl(Tape& t, Var anchor, const SampleQueues& q,
                               const Tensor& l_intent, const Tensor& l_ss, double lambda_i,
                               double tau) {
  return multi_intent_scl_impl(t, anchor, q, 1, l_intent, &l_ss, lambda_i, tau);
}

// Word-level supervised contrastive loss: every token representation is an
// anchor, compared against every queued word. Intent-guided weighting
// (stage 2) adds lambda^2 * (l_I . l_I_k) to the per-pair label overlap.
inline Var slot_scl_impl(Tape& t, const std::vector<Var>& anchors, const SampleQueues& q,
                         int stage, const std::vector<Tensor>& l_slot,
                         const Tensor* l_intent, double lambda, double tau) {
  require(anchors.size() == l_slot.size(), "slot_scl: anchor/label mismatch");
  if (q.empty()) return t.constant_scalar(0.0);

  struct QueuedWord {
    const Tensor* feat;
    const Tensor* label;
    double intent_overlap;
  };
  std::vector<QueuedWord> words;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const QueueEntry& e = q.at(k);
    const auto& feats = stage == 0 ? e.s0 : e.s1;
    double io = l_intent != nullptr ? lambda * lambda * label_dot(*l_intent, e.l_intent) : 0.0;
    for (std::size_t j = 0; j < feats.size(); ++j)
      words.push_back({&feats[j], &e.l_slot[j], io});
  }

  std::vector<Var> anchor_terms;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::vector<double> weight(words.size(), 0.0);
    double m_i = 0.0;
    for (std::size_t w = 0; w < words.size(); ++w) {
      weight[w] = label_dot(l_slot[i], *words[w].label) + words[w].intent_overlap;
      m_i += weight[w];
    }
    if (m_i == 0.0) continue;  // anchor has no positive
    for (auto& v : weight) v /= m_i;
    std::vector<Var> sims;
    sims.reserve(words.size());
    for (const auto& w : words)
      sims.push_back(cosine_sim(t, anchors[i], t.constant(*w.feat), tau));
    anchor_terms.push_back(detail::weighted_info_nce(t, sims, weight));
  }
  if (anchor_terms.empty()) return t.constant_scalar(0.0);
  return t.add_n(anchor_terms);
}

inline Var slot_scl(Tape& t, const std::vector<Var>& anchors, const SampleQueues& q,
                    const std::vector<Tensor>& l_slot, double tau) {
  return slot_scl_impl(t, anchors, q, 0, l_slot, nullptr, 0.0, tau);
}

inline Var ig_slot_scl(Tape& t, const std::vector<Var>& anchors, const SampleQueues& q,
                       const std::vector<Tensor>& l_slot, const Tensor& l_intent,
                       double lambda_s, double tau) {
  return slot_scl_impl(t, anchors, q, 1, l_slot, &l_intent, lambda_s, tau);
}

// ---- full objective ----

struct LossVars {
  Var intent, slot, margin_intent, margin_slot;
  Var scl_mi, scl_slot, scl_sgmi, scl_igs;
  Var supervised;  // the two-task objective without contrastive terms
  Var total;
};

// supervised + eta_I (L_MI + L_SGMI) + eta_S (L_S + L_IGS)
inline Var scl_objective(Tape& t, Var supervised, Var mi, Var sgmi, Var s, Var igs,
                         double eta_i, double eta_s) {
  return t.add(supervised, t.add(t.scale(t.add(mi, sgmi), eta_i),
                                 t.scale(t.add(s, igs), eta_s)));
}

// Assembles every loss term for one sample's trace. Contrastive terms are
// zero constants when `scl_on` is false or the queues are still warming up.
inline LossVars assemble_losses(Tape& t, const TrainConfig& cfg, const ForwardTrace& tr,
                                const EncodedSample& gold, const SampleQueues& queues,
                                bool scl_on, int o_slot_id) {
  LossVars out;
  out.intent = intent_loss(t, gold.intent_multi_hot, tr.y_i0, tr.y_i1);
  out.slot = slot_loss(t, gold.slot_one_hots, tr.y_s0, tr.y_s1);
  std::vector<Tensor> intent_gold_per_token(static_cast<std::size_t>(tr.n),
                                            gold.intent_multi_hot);
  out.margin_intent = margin_penalty(t, intent_gold_per_token, tr.y_i0, tr.y_i1);
  out.margin_slot = margin_penalty(t, gold.slot_one_hots, tr.y_s0, tr.y_s1);
  out.supervised = coguiding_objective(t, out.intent, out.slot, out.margin_intent,
                                       out.margin_slot, cfg.gamma, cfg.beta_i, cfg.beta_s);
  if (scl_on) {
    Tensor l_ss = sentence_slot_vector(gold.slot_one_hots, o_slot_id);
    out.scl_mi = multi_intent_scl(t, tr.h_u0, queues, gold.intent_multi_hot, cfg.tau);
    out.scl_sgmi = sg_multi_intent_scl(t, tr.h_u1, queues, gold.intent_multi_hot, l_ss,
                                       cfg.lambda_i, cfg.tau);
    out.scl_slot = slot_scl(t, tr.h_s0, queues, gold.slot_one_hots, cfg.tau);
    out.scl_igs = ig_slot_scl(t, tr.h_s1, queues, gold.slot_one_hots,
                              gold.intent_multi_hot, cfg.lambda_s, cfg.tau);
    out.total = scl_objective(t, out.supervised, out.scl_mi, out.scl_sgmi, out.scl_slot,
                              out.scl_igs, cfg.eta_i, cfg.eta_s);
  } else {
    out.scl_mi = t.constant_scalar(0.0);
    out.scl_sgmi = t.constant_scalar(0.0);
    out.scl_slot = t.constant_scalar(0.0);
    out.scl_igs = t.constant_scalar(0.0);
    out.total = out.supervised;
  }
  return out;
}

// Detaches one sample's features and labels into a queue entry.
inline QueueEntry make_queue_entry(const Tape& t, const ForwardTrace& tr,
                                   const EncodedSample& gold, int o_slot_id) {
  QueueEntry e;
  e.u0 = t.value(tr.h_u0);
  e.u1 = t.value(tr.h_u1);
  for (int i = 0; i < tr.n; ++i) {
    e.s0.push_back(t.value(tr.h_s0[static_cast<std::size_t>(i)]));
    e.s1.push_back(t.value(tr.h_s1[static_cast<std::size_t>(i)]));
  }
  e.l_intent = gold.intent_multi_hot;
  e.l_slot = gold.slot_one_hots;
  e.l_ss = sentence_slot_vector(gold.slot_one_hots, o_slot_id);
  return e;
}

}  // namespace coguide
