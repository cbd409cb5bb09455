#pragma once

#include <set>
#include <string>
#include <vector>

#include "coguide/config.hpp"
#include "coguide/corpus.hpp"
#include "coguide/graphs.hpp"
#include "coguide/hgat.hpp"
#include "coguide/nn.hpp"

namespace coguide {

struct Prediction {
  std::set<int> intents;   // sentence-level intent ids, never empty
  std::vector<int> slots;  // one slot id per token
};

// Tape handles for everything one sample's two-stage pass produces; enough
// for loss computation, gradients and queue updates.
struct ForwardTrace {
  int n = 0;
  std::vector<Var> enc;         // shared encoder outputs, n x (lstm+attn)
  std::vector<Var> h_i0, h_s0;  // stage-1 task features, n x d
  std::vector<Var> y_i0, y_s0;  // stage-1 distributions
  std::vector<int> slot_pred;   // argmax over stage-1 slot probs
  std::set<int> intent_pred;    // token-level intent vote over stage 1
  std::vector<Var> h_i1, h_s1;  // stage-2 features after graph guidance
  std::vector<Var> y_i1, y_s1;  // stage-2 distributions
  Var h_u0, h_u1;               // utterance means of stage-1/2 intent features
};

// Detached per-stage values, for inspection and tests.
struct StageOutputs {
  std::vector<Tensor> intent_probs;
  std::vector<Tensor> slot_probs;
  std::vector<Tensor> intent_features;
  std::vector<Tensor> slot_features;
};

// intent j is selected iff more than half of the tokens assign it a
// probability above the threshold; an empty vote falls back to the argmax of
// the token-mean probability (lowest index wins ties) so m >= 1 always holds.
inline std::set<int> intent_vote(const std::vector<Tensor>& intent_probs,
                                 double threshold) {
  require(!intent_probs.empty(), "intent_vote: no tokens");
  int n = static_cast<int>(intent_probs.size());
  int n_labels = intent_probs[0].dim(0);
  std::set<int> selected;
  for (int j = 0; j < n_labels; ++j) {
    int votes = 0;
    for (int i = 0; i < n; ++i)
      if (intent_probs[static_cast<std::size_t>(i)][j] > threshold) ++votes;
    if (votes * 2 > n) selected.insert(j);
  }
  if (selected.empty()) {
    int best = 0;
    double best_mean = -1.0;
    for (int j = 0; j < n_labels; ++j) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += intent_probs[static_cast<std::size_t>(i)][j];
      mean /= n;
      if (mean > best_mean + 0.0) {
        best_mean = mean;
        best = j;
      }
    }
    selected.insert(best);
  }
  return selected;
}

inline int argmax(const Tensor& v) {
  int best = 0;
  for (std::int64_t i = 1; i < v.numel(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

namespace detail {
inline Var label_embedding_row(ParamBinding& pb, const TrainConfig& cfg,
                               const std::string& kind, int id) {
  Var e = pb.tape().row(pb["embed." + kind + "_label"], id);
  if (cfg.label_emb_dim != cfg.hidden_dim)
    e = pb.tape().matvec(pb["adapter." + kind + "_label"], e);
  return e;
}

inline std::vector<HgatLayerVars> bind_hgat_stack(ParamBinding& pb, const std::string& graph,
                                                  const TrainConfig& cfg) {
  std::vector<HgatLayerVars> layers;
  for (int l = 0; l < cfg.gnn_layers; ++l)
    layers.push_back(bind_hgat_layer(pb, graph, l, cfg.heads, cfg.collapse_relations));
  return layers;
}

inline HgatOptions hgat_options(const TrainConfig& cfg) {
  return HgatOptions{cfg.heads, cfg.leaky_slope, cfg.collapse_relations,
                     cfg.scale_by_attn_dim};
}

inline DecoderParams stage2_decoder(ParamBinding& pb, const TrainConfig& cfg,
                                    const std::string& task) {
  return bind_decoder(pb, "dec." + task + (cfg.tie_stage_decoders ? "1" : "2"));
}
}  // namespace detail

// Shared self-attentive encoder: BiLSTM over word vectors concatenated with
// scaled dot-product self-attention over the same word vectors.
inline std::vector<Var> encode_shared(ParamBinding& pb, const TrainConfig& cfg,
                                      const std::vector<int>& word_ids) {
  require(!word_ids.empty(), "encode_shared: empty utterance");
  Tape& t = pb.tape();
  std::vector<Var> emb;
  emb.reserve(word_ids.size());
  for (int id : word_ids) emb.push_back(t.row(pb["embed.word"], id));
  auto ctx = birnn_forward(pb, "enc.lstm", emb);
  auto attn = self_attention(t, emb, pb["enc.attn.wq"], pb["enc.attn.wk"], pb["enc.attn.wv"]);
  std::vector<Var> out;
  out.reserve(word_ids.size());
  for (std::size_t i = 0; i < word_ids.size(); ++i)
    out.push_back(t.concat({ctx[i], attn[i]}));
  return out;
}

// Initial estimation: task-specific BiLSTMs over the shared encoding, then
// token-level decoders. No cross-task information flows here.
inline void stage1_forward(ParamBinding& pb, const TrainConfig& cfg, ForwardTrace& tr) {
  Tape& t = pb.tape();
  tr.h_i0 = birnn_forward(pb, "intent_lstm", tr.enc);
  tr.h_s0 = birnn_forward(pb, "slot_lstm", tr.enc);
  auto dec_i = bind_decoder(pb, "dec.intent1");
  auto dec_s = bind_decoder(pb, "dec.slot1");
  tr.y_i0.clear();
  tr.y_s0.clear();
  for (int i = 0; i < tr.n; ++i) {
    tr.y_i0.push_back(intent_token_decoder(t, tr.h_i0[static_cast<std::size_t>(i)], dec_i,
                                           cfg.leaky_slope));
    tr.y_s0.push_back(slot_token_decoder(t, tr.h_s0[static_cast<std::size_t>(i)], dec_s,
                                         cfg.leaky_slope));
  }
}

// Intent decoding with slot guidance: stage-1 intent features and the label
// embeddings of the estimated slot sequence interact on the S2I graph.
inline void stage2_intent_forward(ParamBinding& pb, const TrainConfig& cfg,
                                  ForwardTrace& tr) {
  Tape& t = pb.tape();
  if (cfg.disable_s2i) {
    tr.h_i1 = tr.h_i0;
  } else {
    HeteroGraph g = build_s2i_graph(tr.n, cfg.window);
    std::vector<Var> feats = tr.h_i0;
    for (int i = 0; i < tr.n; ++i)
      feats.push_back(detail::label_embedding_row(
          pb, cfg, "slot", tr.slot_pred[static_cast<std::size_t>(i)]));
    auto layers = detail::bind_hgat_stack(pb, "s2i", cfg);
    auto all = hgat_stack(t, g, feats, layers, detail::hgat_options(cfg));
    tr.h_i1.assign(all.begin(), all.begin() + tr.n);
  }
  auto dec = detail::stage2_decoder(pb, cfg, "intent");
  tr.y_i1.clear();
  for (int i = 0; i < tr.n; ++i)
    tr.y_i1.push_back(intent_token_decoder(t, tr.h_i1[static_cast<std::size_t>(i)], dec,
                                           cfg.leaky_slope));
}

// Slot decoding with intent guidance: an intent-aware BiLSTM re-reads the
// stage-1 slot features together with the stage-1 intent distributions, then
// interacts with the voted intents' label embeddings on the I2S graph.
inline void stage2_slot_forward(ParamBinding& pb, const TrainConfig& cfg,
                                ForwardTrace& tr) {
  Tape& t = pb.tape();
  if (cfg.disable_i2s) {
    tr.h_s1 = tr.h_s0;
  } else {
    std::vector<Var> aware_in;
    aware_in.reserve(static_cast<std::size_t>(tr.n));
    for (int i = 0; i < tr.n; ++i)
      aware_in.push_back(t.concat({tr.y_i0[static_cast<std::size_t>(i)],
                                   tr.h_s0[static_cast<std::size_t>(i)]}));
    auto h_tilde = birnn_forward(pb, "aware_lstm", aware_in);
    int m = static_cast<int>(tr.intent_pred.size());
    HeteroGraph g = build_i2s_graph(tr.n, m, cfg.window);
    std::vector<Var> feats = h_tilde;
    for (int intent : tr.intent_pred)  // std::set iterates ascending
      feats.push_back(detail::label_embedding_row(pb, cfg, "intent", intent));
    auto layers = detail::bind_hgat_stack(pb, "i2s", cfg);
    auto all = hgat_stack(t, g, feats, layers, detail::hgat_options(cfg));
    tr.h_s1.assign(all.begin(), all.begin() + tr.n);
  }
  auto dec = detail::stage2_decoder(pb, cfg, "slot");
  tr.y_s1.clear();
  for (int i = 0; i < tr.n; ++i)
    tr.y_s1.push_back(slot_token_decoder(t, tr.h_s1[static_cast<std::size_t>(i)], dec,
                                         cfg.leaky_slope));
}

// Full two-stage pass for one utterance.
inline ForwardTrace full_forward(ParamBinding& pb, const TrainConfig& cfg,
                                 const std::vector<int>& word_ids) {
  Tape& t = pb.tape();
  ForwardTrace tr;
  tr.n = static_cast<int>(word_ids.size());
  tr.enc = encode_shared(pb, cfg, word_ids);
  stage1_forward(pb, cfg, tr);

  std::vector<Tensor> y_i0_vals, y_s0_vals;
  for (int i = 0; i < tr.n; ++i) {
    y_i0_vals.push_back(t.value(tr.y_i0[static_cast<std::size_t>(i)]));
    y_s0_vals.push_back(t.value(tr.y_s0[static_cast<std::size_t>(i)]));
  }
  tr.slot_pred.clear();
  for (const auto& p : y_s0_vals) tr.slot_pred.push_back(argmax(p));
  tr.intent_pred = intent_vote(y_i0_vals, cfg.vote_threshold);

  stage2_intent_forward(pb, cfg, tr);
  stage2_slot_forward(pb, cfg, tr);

  tr.h_u0 = mean_of(t, tr.h_i0);
  tr.h_u1 = mean_of(t, tr.h_i1);
  return tr;
}

inline StageOutputs stage_outputs(const Tape& t, const ForwardTrace& tr, int stage) {
  require(stage == 0 || stage == 1, "stage must be 0 or 1");
  StageOutputs out;
  const auto& yi = stage == 0 ? tr.y_i0 : tr.y_i1;
  const auto& ys = stage == 0 ? tr.y_s0 : tr.y_s1;
  const auto& hi = stage == 0 ? tr.h_i0 : tr.h_i1;
  const auto& hs = stage == 0 ? tr.h_s0 : tr.h_s1;
  for (int i = 0; i < tr.n; ++i) {
    out.intent_probs.push_back(t.value(yi[static_cast<std::size_t>(i)]));
    out.slot_probs.push_back(t.value(ys[static_cast<std::size_t>(i)]));
    out.intent_features.push_back(t.value(hi[static_cast<std::size_t>(i)]));
    out.slot_features.push_back(t.value(hs[static_cast<std::size_t>(i)]));
  }
  return out;
}

// Inference: final intents by voting over stage-2 intent distributions, final
// slots by argmax over stage-2 slot distributions.
inline Prediction predict(const ModelParams& params, const TrainConfig& cfg,
                          const std::vector<int>& word_ids) {
  Tape tape;
  ParamBinding pb(tape, params);
  ForwardTrace tr = full_forward(pb, cfg, word_ids);
  std::vector<Tensor> y_i1_vals;
  Prediction pred;
  for (int i = 0; i < tr.n; ++i) {
    y_i1_vals.push_back(tape.value(tr.y_i1[static_cast<std::size_t>(i)]));
    pred.slots.push_back(argmax(tape.value(tr.y_s1[static_cast<std::size_t>(i)])));
  }
  pred.intents = intent_vote(y_i1_vals, cfg.vote_threshold);
  return pred;
}

}  // namespace coguide
