#pragma once

#include <map>
#include <string>
#include <vector>

#include "coguide/params.hpp"
#include "coguide/tape.hpp"

namespace coguide {

// Lazily registers parameter tensors as tape leaves so a forward pass only
// materializes what it touches; untouched parameters keep zero gradients.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ModelParams& params) : tape_(&tape), params_(&params) {}

  Var operator[](const std::string& path) {
    auto it = vars_.find(path);
    if (it != vars_.end()) return it->second;
    Var v = tape_->leaf(params_->at(path));
    vars_.emplace(path, v);
    return v;
  }

  // Copies accumulated leaf gradients into `out` (which must be pre-sized via
  // ModelParams::zero_grads). Throws naming the parameter on non-finite grads.
  void add_grads_to(GradMap& out) const {
    for (const auto& [path, var] : vars_) {
      const Tensor& g = tape_->grad(var);
      if (g.numel() == 0) continue;  // backward never ran through this leaf
      auto it = out.find(path);
      require(it != out.end(), "grad for unknown parameter '" + path + "'");
      require(g.all_finite(), "non-finite gradient for parameter '" + path + "'");
      for (std::int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
    }
  }

  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  const ModelParams* params_;
  std::map<std::string, Var> vars_;
};

// Reverse-mode gradients of a scalar loss with respect to every parameter;
// parameters off the loss path get zeros.
inline GradMap grad_of(Tape& tape, Var loss, ParamBinding& binding,
                       const ModelParams& params) {
  GradMap g = params.zero_grads();
  tape.backward(loss);
  binding.add_grads_to(g);
  return g;
}

// ---- recurrent layer ----

struct LstmDirParams {
  Var w_ih;  // [4H, d_in]
  Var w_hh;  // [4H, H]
  Var b;     // [4H]
};

// Single-direction LSTM scan (gate order i, f, g, o; zero initial state).
inline std::vector<Var> lstm_scan(Tape& t, const std::vector<Var>& inputs,
                                  const LstmDirParams& p, bool reversed) {
  require(!inputs.empty(), "lstm_scan: empty sequence");
  int four_h = t.value(p.b).dim(0);
  int H = four_h / 4;
  Var h = t.constant(Tensor({H}));
  Var c = t.constant(Tensor({H}));
  std::vector<Var> out(inputs.size());
  int n = static_cast<int>(inputs.size());
  for (int step = 0; step < n; ++step) {
    int pos = reversed ? n - 1 - step : step;
    Var gates = t.add(t.add(t.matvec(p.w_ih, inputs[static_cast<std::size_t>(pos)]),
                            t.matvec(p.w_hh, h)),
                      p.b);
    Var ig = t.sigmoid(t.slice(gates, 0, H));
    Var fg = t.sigmoid(t.slice(gates, H, H));
    Var gg = t.tanh(t.slice(gates, 2 * H, H));
    Var og = t.sigmoid(t.slice(gates, 3 * H, H));
    c = t.add(t.mul(fg, c), t.mul(ig, gg));
    h = t.mul(og, t.tanh(c));
    out[static_cast<std::size_t>(pos)] = h;
  }
  return out;
}

// Bidirectional recurrent layer: per-position concat of the forward and
// backward passes. Output width is twice the per-direction hidden size.
inline std::vector<Var> birnn_forward(Tape& t, const std::vector<Var>& inputs,
                                      const LstmDirParams& fw, const LstmDirParams& bw) {
  auto f = lstm_scan(t, inputs, fw, false);
  auto b = lstm_scan(t, inputs, bw, true);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(t.concat({f[i], b[i]}));
  return out;
}

inline LstmDirParams bind_lstm_dir(ParamBinding& pb, const std::string& prefix) {
  return LstmDirParams{pb[prefix + ".w_ih"], pb[prefix + ".w_hh"], pb[prefix + ".b"]};
}

inline std::vector<Var> birnn_forward(ParamBinding& pb, const std::string& prefix,
                                      const std::vector<Var>& inputs) {
  return birnn_forward(pb.tape(), inputs, bind_lstm_dir(pb, prefix + ".fw"),
                       bind_lstm_dir(pb, prefix + ".bw"));
}

// ---- scaled dot-product self-attention ----

// Q, K, V are linear projections of the input rows; weights softmax-normalized
// over the n keys, scaled by sqrt of the key width.
inline std::vector<Var> self_attention(Tape& t, const std::vector<Var>& xs, Var wq,
                                       Var wk, Var wv) {
  require(!xs.empty(), "self_attention: empty sequence");
  int dk = t.value(wk).rows();
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::size_t n = xs.size();
  std::vector<Var> q(n), k(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = t.matvec(wq, xs[i]);
    k[i] = t.matvec(wk, xs[i]);
    v[i] = t.matvec(wv, xs[i]);
  }
  std::vector<Var> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> logits(n);
    for (std::size_t j = 0; j < n; ++j) logits[j] = t.scale(t.dot(q[i], k[j]), scale);
    Var alpha = t.softmax(t.concat(logits));
    std::vector<Var> terms(n);
    for (std::size_t j = 0; j < n; ++j) terms[j] = t.mul_sv(t.pick(alpha, static_cast<int>(j)), v[j]);
    out[i] = t.add_n(terms);
  }
  return out;
}

// ---- two-layer token decoders ----

struct DecoderParams {
  Var w1, b1, w2, b2;
};

inline DecoderParams bind_decoder(ParamBinding& pb, const std::string& prefix) {
  return DecoderParams{pb[prefix + ".w1"], pb[prefix + ".b1"], pb[prefix + ".w2"],
                       pb[prefix + ".b2"]};
}

inline Var decoder_logits(Tape& t, Var h, const DecoderParams& p, double leaky_slope) {
  Var mid = t.leaky_relu(linear(t, p.w2, h, p.b2), leaky_slope);
  return linear(t, p.w1, mid, p.b1);
}

// per-label probabilities in (0,1)
inline Var intent_token_decoder(Tape& t, Var h, const DecoderParams& p, double leaky_slope) {
  return t.sigmoid(decoder_logits(t, h, p, leaky_slope));
}

// distribution over slot labels
inline Var slot_token_decoder(Tape& t, Var h, const DecoderParams& p, double leaky_slope) {
  return t.softmax(decoder_logits(t, h, p, leaky_slope));
}

}  // namespace coguide
