#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "coguide/metrics.hpp"
#include "coguide/objectives.hpp"

namespace coguide {

// ---- optimizer ----

struct AdamState {
  std::map<std::string, Tensor> m, v;  // first/second moments, shapes mirror params
  long step = 0;

  static AdamState init(const ModelParams& params) {
    AdamState st;
    for (const auto& [path, t] : params.tensors) {
      st.m.emplace(path, Tensor(t.shape()));
      st.v.emplace(path, Tensor(t.shape()));
    }
    return st;
  }
};

// Bias-corrected Adam with plain L2-coupled weight decay (decay added to the
// gradient before the moment updates).
inline void adam_step(ModelParams& params, const GradMap& grads, AdamState& st, double lr,
                      double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  ++st.step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (auto& [path, theta] : params.tensors) {
    auto git = grads.find(path);
    require(git != grads.end(), "adam_step: missing gradient for '" + path + "'");
    Tensor& m = st.m.at(path);
    Tensor& v = st.v.at(path);
    const Tensor& g = git->second;
    for (std::int64_t i = 0; i < theta.numel(); ++i) {
      double gi = g[i] + weight_decay * theta[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

// ---- evaluation ----

inline Prediction predict_sample(const ModelParams& params, const TrainConfig& cfg,
                                 const Vocabularies& vocab, const Sample& s) {
  std::vector<int> word_ids;
  for (const auto& tok : s.tokens) {
    std::string t = tok;
    if (cfg.lowercase)
      std::transform(t.begin(), t.end(), t.begin(),
                     [](unsigned char c) { return std::tolower(c); });
    word_ids.push_back(vocab.word_id(t));
  }
  return predict(params, cfg, word_ids);
}

// Side-effect free: predictions are mapped back to label strings and compared
// against the gold strings, so unseen gold labels simply never match.
inline EvalReport evaluate(const ModelParams& params, const TrainConfig& cfg,
                           const Vocabularies& vocab, const std::vector<Sample>& samples) {
  require(!samples.empty(), "evaluate: empty corpus");
  std::vector<std::set<std::string>> pred_intents, gold_intents;
  std::vector<std::vector<std::string>> pred_tags, gold_tags;
  for (const auto& s : samples) {
    Prediction p = predict_sample(params, cfg, vocab, s);
    std::set<std::string> intents;
    for (int id : p.intents) intents.insert(vocab.id_to_intent[static_cast<std::size_t>(id)]);
    std::vector<std::string> tags;
    for (int id : p.slots) tags.push_back(vocab.id_to_slot[static_cast<std::size_t>(id)]);
    pred_intents.push_back(std::move(intents));
    pred_tags.push_back(std::move(tags));
    gold_intents.push_back(s.intents);
    gold_tags.push_back(s.slot_tags);
  }
  return make_report(pred_intents, pred_tags, gold_intents, gold_tags);
}

// ---- training loop ----

struct EpochLosses {
  double intent = 0, slot = 0, margin_intent = 0, margin_slot = 0;
  double scl_mi = 0, scl_slot = 0, scl_sgmi = 0, scl_igs = 0;
  double total = 0;

  static std::string csv_header() {
    return "epoch,intent_loss,slot_loss,intent_margin,slot_margin,"
           "scl_multi_intent,scl_slot,scl_slot_guided_mi,scl_intent_guided_slot,total";
  }
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  SampleQueues queues;
  int epoch = 0;
  double best_dev_acc = -1.0;
  int best_epoch = -1;
  ModelParams best_params;
  std::string checkpoint_path;  // where the best checkpoint was written, if any
};

// One pass over the corpus: per-sample forward, summed batch loss, one
// optimizer step per batch, queue updates after the step. Returns per-sample
// mean losses.
inline EpochLosses train_epoch(TrainState& st, const std::vector<EncodedSample>& corpus,
                               const TrainConfig& cfg, int o_slot_id,
                               const std::vector<std::size_t>& order) {
  require(!order.empty(), "train_epoch: empty order");
  for (std::size_t idx : order)
    require(idx < corpus.size(), "train_epoch: order index out of range");
  EpochLosses sums;
  std::size_t done = 0;
  while (done < order.size()) {
    std::size_t batch_end = std::min(order.size(), done + static_cast<std::size_t>(cfg.batch_size));
    GradMap acc = st.params.zero_grads();
    std::vector<QueueEntry> pending;
    for (std::size_t b = done; b < batch_end; ++b) {
      const EncodedSample& sample = corpus[order[b]];
      Tape tape;
      ParamBinding pb(tape, st.params);
      ForwardTrace tr = full_forward(pb, cfg, sample.word_ids);
      LossVars losses = assemble_losses(tape, cfg, tr, sample, st.queues, cfg.scl, o_slot_id);
      double total = tape.value(losses.total)[0];
      require(std::isfinite(total), "non-finite training loss at epoch " +
                                        std::to_string(st.epoch) + ", sample " +
                                        std::to_string(order[b]));
      sums.intent += tape.value(losses.intent)[0];
      sums.slot += tape.value(losses.slot)[0];
      sums.margin_intent += tape.value(losses.margin_intent)[0];
      sums.margin_slot += tape.value(losses.margin_slot)[0];
      sums.scl_mi += tape.value(losses.scl_mi)[0];
      sums.scl_slot += tape.value(losses.scl_slot)[0];
      sums.scl_sgmi += tape.value(losses.scl_sgmi)[0];
      sums.scl_igs += tape.value(losses.scl_igs)[0];
      sums.total += total;
      tape.backward(losses.total);
      pb.add_grads_to(acc);
      pending.push_back(make_queue_entry(tape, tr, sample, o_slot_id));
    }
    adam_step(st.params, acc, st.adam, cfg.lr, cfg.weight_decay);
    for (auto& e : pending) st.queues.push(std::move(e));
    done = batch_end;
  }
  double inv = 1.0 / static_cast<double>(order.size());
  sums.intent *= inv;
  sums.slot *= inv;
  sums.margin_intent *= inv;
  sums.margin_slot *= inv;
  sums.scl_mi *= inv;
  sums.scl_slot *= inv;
  sums.scl_sgmi *= inv;
  sums.scl_igs *= inv;
  sums.total *= inv;
  return sums;
}

struct TrainResult {
  TrainState state;
  Vocabularies vocab;
  std::vector<EpochLosses> losses;
  EvalReport best_dev;
  int o_slot_id = -1;
};

struct TrainIO {
  std::string checkpoint_path;  // best-dev checkpoint, written when non-empty
  std::string loss_csv_path;    // per-epoch loss curve, written when non-empty
  std::ostream* log = nullptr;  // optional progress stream
};

// Full training run with dev-based model selection on overall accuracy and
// early stopping after `patience` epochs without improvement. Deterministic
// under a fixed config and seed.
inline TrainResult run_training(const std::vector<Sample>& train_samples,
                                const std::vector<Sample>& dev_samples,
                                const TrainConfig& cfg, const TrainIO& io = {}) {
  cfg.validate();
  require(!train_samples.empty(), "run_training: empty training corpus");
  TrainResult result;
  result.vocab = build_vocab(train_samples, cfg.lowercase);
  auto o_it = result.vocab.slot_to_id.find("O");
  result.o_slot_id = o_it == result.vocab.slot_to_id.end() ? -1 : o_it->second;

  std::vector<EncodedSample> encoded;
  for (const auto& s : train_samples)
    encoded.push_back(encode_sample(s, result.vocab, cfg.lowercase));

  TrainState st{init_params(cfg, result.vocab.n_words(), result.vocab.n_slots(),
                            result.vocab.n_intents()),
                AdamState{}, SampleQueues(cfg.queue_size)};
  st.adam = AdamState::init(st.params);

  std::ofstream csv;
  if (!io.loss_csv_path.empty()) {
    csv.open(io.loss_csv_path);
    require(static_cast<bool>(csv), "cannot open loss csv: " + io.loss_csv_path);
    csv << EpochLosses::csv_header() << "\n";
  }

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::vector<Sample>& dev = dev_samples.empty() ? train_samples : dev_samples;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    st.epoch = epoch;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng() % i]);
    EpochLosses losses = train_epoch(st, encoded, cfg, result.o_slot_id, order);
    result.losses.push_back(losses);
    if (csv.is_open()) {
      csv << epoch << ',' << losses.intent << ',' << losses.slot << ','
          << losses.margin_intent << ',' << losses.margin_slot << ',' << losses.scl_mi << ','
          << losses.scl_slot << ',' << losses.scl_sgmi << ',' << losses.scl_igs << ','
          << losses.total << "\n";
    }
    EvalReport dev_report = evaluate(st.params, cfg, result.vocab, dev);
    if (io.log)
      (*io.log) << "epoch " << epoch << " loss " << losses.total << " dev overall "
                << dev_report.overall_acc << "\n";
    if (dev_report.overall_acc > st.best_dev_acc) {
      st.best_dev_acc = dev_report.overall_acc;
      st.best_epoch = epoch;
      st.best_params = st.params;
      result.best_dev = dev_report;
      stale = 0;
      if (!io.checkpoint_path.empty()) {
        save_checkpoint(io.checkpoint_path, st.best_params, cfg.hash());
        st.checkpoint_path = io.checkpoint_path;
      }
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }
  result.state = std::move(st);
  return result;
}

// ---- finite-difference gradient verification ----

struct GradCheckTerm {
  std::string name;
  double max_rel_err = 0.0;
  std::string worst_path;
  int checked = 0;
};

struct GradCheckReport {
  GradCheckTerm full;
  std::vector<GradCheckTerm> per_term;
  bool passed(double tol = 1e-4) const {
    if (full.max_rel_err > tol) return false;
    for (const auto& term : per_term)
      if (term.max_rel_err > tol) return false;
    return true;
  }
};

namespace detail {

inline std::vector<EncodedSample> micro_samples(int n_intents, int n_slots,
                                                std::mt19937_64& rng) {
  auto multi_hot = [&](std::initializer_list<int> ids) {
    Tensor t({n_intents});
    for (int id : ids) t[id] = 1.0;
    return t;
  };
  auto one_hot = [&](int id) {
    Tensor t({n_slots});
    t[id] = 1.0;
    return t;
  };
  (void)rng;
  EncodedSample a;
  a.word_ids = {1, 2, 3, 4};
  a.slot_ids = {0, 1, 2, 0};
  a.intent_multi_hot = multi_hot({0, 2});
  for (int id : a.slot_ids) a.slot_one_hots.push_back(one_hot(id));
  EncodedSample b;
  b.word_ids = {4, 3, 0, 2, 1};
  b.slot_ids = {1, 0, 3, 3, 2};
  b.intent_multi_hot = multi_hot({1});
  for (int id : b.slot_ids) b.slot_one_hots.push_back(one_hot(id));
  return {a, b};
}

inline SampleQueues micro_queues(const TrainConfig& cfg, int n_intents, int n_slots,
                                 int o_slot_id, std::mt19937_64& rng) {
  auto uniform = [&rng](double lo, double hi) {
    double u = (rng() >> 11) * (1.0 / 9007199254740992.0);
    return lo + u * (hi - lo);
  };
  SampleQueues q(cfg.queue_size);
  for (int k = 0; k < cfg.queue_size; ++k) {
    QueueEntry e;
    auto rand_vec = [&](int d) {
      Tensor t({d});
      for (int i = 0; i < d; ++i) t[i] = uniform(-1.0, 1.0);
      return t;
    };
    e.u0 = rand_vec(cfg.hidden_dim);
    e.u1 = rand_vec(cfg.hidden_dim);
    int words = 2 + static_cast<int>(rng() % 2);
    for (int j = 0; j < words; ++j) {
      e.s0.push_back(rand_vec(cfg.hidden_dim));
      e.s1.push_back(rand_vec(cfg.hidden_dim));
      Tensor oh({n_slots});
      oh[static_cast<int>(rng() % static_cast<unsigned long>(n_slots))] = 1.0;
      e.l_slot.push_back(std::move(oh));
    }
    Tensor mh({n_intents});
    mh[static_cast<int>(rng() % static_cast<unsigned long>(n_intents))] = 1.0;
    if (rng() % 2 == 0) mh[static_cast<int>(rng() % static_cast<unsigned long>(n_intents))] = 1.0;
    e.l_intent = std::move(mh);
    e.l_ss = sentence_slot_vector(e.l_slot, o_slot_id);
    q.push(std::move(e));
  }
  return q;
}

}  // namespace detail

// Compares analytic gradients of the full objective (and optionally each loss
// term in isolation) against central finite differences on a micro model.
// Relative error uses |a - n| / max(1, |a|, |n|).
inline GradCheckReport grad_check(unsigned long seed, bool per_term = true,
                                  double epsilon = 1e-4, int min_coords = 200) {
  TrainConfig cfg;
  cfg.word_emb_dim = 8;
  cfg.label_emb_dim = 6;  // != hidden so the label adapters are on the path
  cfg.hidden_dim = 8;
  cfg.lstm_dim = 8;
  cfg.attn_dim = 6;
  cfg.decoder_mid_dim = 8;
  cfg.gnn_layers = 2;
  cfg.heads = 2;
  cfg.window = 1;
  cfg.queue_size = 3;
  cfg.seed = seed;
  cfg.scl = true;
  cfg.validate();

  const int n_words = 6, n_slots = 4, n_intents = 3;
  std::mt19937_64 rng(seed * 7919 + 13);
  auto samples = detail::micro_samples(n_intents, n_slots, rng);
  const int o_slot_id = 0;
  SampleQueues queues = detail::micro_queues(cfg, n_intents, n_slots, o_slot_id, rng);
  ModelParams params = init_params(cfg, n_words, n_slots, n_intents);

  enum class Term { Total, Intent, Slot, MarginI, MarginS, Mi, S, Sgmi, Igs };
  auto term_var = [](const LossVars& lv, Term which) {
    switch (which) {
      case Term::Total: return lv.total;
      case Term::Intent: return lv.intent;
      case Term::Slot: return lv.slot;
      case Term::MarginI: return lv.margin_intent;
      case Term::MarginS: return lv.margin_slot;
      case Term::Mi: return lv.scl_mi;
      case Term::S: return lv.scl_slot;
      case Term::Sgmi: return lv.scl_sgmi;
      case Term::Igs: return lv.scl_igs;
    }
    throw std::runtime_error("bad term");
  };

  auto loss_of = [&](const ModelParams& p, Term which, GradMap* grads_out) {
    double total = 0.0;
    if (grads_out) *grads_out = p.zero_grads();
    for (const auto& sample : samples) {
      Tape tape;
      ParamBinding pb(tape, p);
      ForwardTrace tr = full_forward(pb, cfg, sample.word_ids);
      LossVars lv = assemble_losses(tape, cfg, tr, sample, queues, true, o_slot_id);
      Var v = term_var(lv, which);
      total += tape.value(v)[0];
      if (grads_out) {
        tape.backward(v);
        pb.add_grads_to(*grads_out);
      }
    }
    return total;
  };

  auto check_term = [&](Term which, const std::string& name, int coords) {
    GradCheckTerm report;
    report.name = name;
    GradMap analytic;
    loss_of(params, which, &analytic);
    std::mt19937_64 pick_rng(seed ^ 0xabcdef1234567890ULL);
    // Round-robin over tensors so every parameter family gets probed.
    std::vector<std::string> paths;
    for (const auto& [path, t] : params.tensors) paths.push_back(path);
    int rounds = static_cast<int>((coords + paths.size() - 1) / paths.size());
    ModelParams work = params;
    for (int round = 0; round < rounds; ++round) {
      for (const auto& path : paths) {
        Tensor& t = work.at(path);
        std::int64_t idx = static_cast<std::int64_t>(pick_rng() %
                                                     static_cast<unsigned long>(t.numel()));
        double original = t[idx];
        t[idx] = original + epsilon;
        double up = loss_of(work, which, nullptr);
        t[idx] = original - epsilon;
        double down = loss_of(work, which, nullptr);
        t[idx] = original;
        double numeric = (up - down) / (2.0 * epsilon);
        double exact = analytic.at(path)[idx];
        double rel = std::abs(exact - numeric) /
                     std::max({1.0, std::abs(exact), std::abs(numeric)});
        ++report.checked;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_path = path + "[" + std::to_string(idx) + "]";
        }
      }
    }
    return report;
  };

  GradCheckReport out;
  out.full = check_term(Term::Total, "total", min_coords);
  if (per_term) {
    out.per_term.push_back(check_term(Term::Intent, "intent_loss", 120));
    out.per_term.push_back(check_term(Term::Slot, "slot_loss", 120));
    out.per_term.push_back(check_term(Term::MarginI, "intent_margin", 120));
    out.per_term.push_back(check_term(Term::MarginS, "slot_margin", 120));
    out.per_term.push_back(check_term(Term::Mi, "scl_multi_intent", 120));
    out.per_term.push_back(check_term(Term::S, "scl_slot", 120));
    out.per_term.push_back(check_term(Term::Sgmi, "scl_slot_guided_mi", 120));
    out.per_term.push_back(check_term(Term::Igs, "scl_intent_guided_slot", 120));
  }
  return out;
}

}  // namespace coguide
