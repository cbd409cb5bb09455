#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "coguide/tensor.hpp"

namespace coguide {

// Hyper-parameters and mode switches. Defaults follow the reported LSTM
// setting where one exists; the rest are documented project defaults.
struct TrainConfig {
  int word_emb_dim = 256;
  int label_emb_dim = 256;
  int hidden_dim = 256;
  int lstm_dim = 256;      // shared-encoder BiLSTM output width
  int attn_dim = 256;      // self-attention output width
  int decoder_mid_dim = 256;
  int gnn_layers = 2;
  int heads = 4;
  int window = 3;

  double lr = 1e-3;
  double weight_decay = 1e-6;
  int batch_size = 16;
  int epochs = 100;
  int patience = 50;
  unsigned long seed = 1;

  double gamma = 0.9;
  double beta_i = 1e-6;
  double beta_s = 1.0;
  double tau = 0.07;
  double eta_i = 0.1;
  double eta_s = 0.01;
  double lambda_i = 0.5;
  double lambda_s = 0.5;
  int queue_size = 64;

  double vote_threshold = 0.5;
  double leaky_slope = 0.01;
  bool scl = true;
  bool lowercase = false;
  bool tie_stage_decoders = false;
  bool disable_s2i = false;
  bool disable_i2s = false;
  bool collapse_relations = false;
  bool scale_by_attn_dim = false;  // attention logits / sqrt(d_att) instead of sqrt(d)

  void validate() const {
    auto pos = [](int v, const char* name) {
      if (v <= 0) throw config_error(std::string(name) + " must be positive");
    };
    pos(word_emb_dim, "word_emb_dim");
    pos(label_emb_dim, "label_emb_dim");
    pos(hidden_dim, "hidden_dim");
    pos(lstm_dim, "lstm_dim");
    pos(attn_dim, "attn_dim");
    pos(decoder_mid_dim, "decoder_mid_dim");
    pos(gnn_layers, "gnn_layers");
    pos(heads, "heads");
    pos(batch_size, "batch_size");
    pos(epochs, "epochs");
    pos(queue_size, "queue_size");
    if (window < 0) throw config_error("window must be >= 0");
    if (hidden_dim % 2 != 0) throw config_error("hidden_dim must be even (BiLSTM halves)");
    if (lstm_dim % 2 != 0) throw config_error("lstm_dim must be even (BiLSTM halves)");
    if (hidden_dim % heads != 0) throw config_error("hidden_dim must be divisible by heads");
    if (gamma < 0.0 || gamma > 1.0) throw config_error("gamma must be in [0,1]");
    if (tau <= 0.0) throw config_error("tau must be positive");
    if (lr <= 0.0) throw config_error("lr must be positive");
    if (weight_decay < 0.0) throw config_error("weight_decay must be >= 0");
    if (vote_threshold <= 0.0 || vote_threshold >= 1.0)
      throw config_error("vote_threshold must be in (0,1)");
    if (lambda_i < 0.0 || lambda_s < 0.0) throw config_error("lambda must be >= 0");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"word_emb_dim", word_emb_dim},
                          {"label_emb_dim", label_emb_dim},
                          {"hidden_dim", hidden_dim},
                          {"lstm_dim", lstm_dim},
                          {"attn_dim", attn_dim},
                          {"decoder_mid_dim", decoder_mid_dim},
                          {"gnn_layers", gnn_layers},
                          {"heads", heads},
                          {"window", window},
                          {"lr", lr},
                          {"weight_decay", weight_decay},
                          {"batch_size", batch_size},
                          {"epochs", epochs},
                          {"patience", patience},
                          {"seed", seed},
                          {"gamma", gamma},
                          {"beta_i", beta_i},
                          {"beta_s", beta_s},
                          {"tau", tau},
                          {"eta_i", eta_i},
                          {"eta_s", eta_s},
                          {"lambda_i", lambda_i},
                          {"lambda_s", lambda_s},
                          {"queue_size", queue_size},
                          {"vote_threshold", vote_threshold},
                          {"leaky_slope", leaky_slope},
                          {"scl", scl},
                          {"lowercase", lowercase},
                          {"tie_stage_decoders", tie_stage_decoders},
                          {"disable_s2i", disable_s2i},
                          {"disable_i2s", disable_i2s},
                          {"collapse_relations", collapse_relations},
                          {"scale_by_attn_dim", scale_by_attn_dim}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    const nlohmann::json canon = c.to_json();
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!canon.contains(it.key()))
        throw config_error("unknown config key '" + it.key() + "'");
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("word_emb_dim", c.word_emb_dim);
    get("label_emb_dim", c.label_emb_dim);
    get("hidden_dim", c.hidden_dim);
    get("lstm_dim", c.lstm_dim);
    get("attn_dim", c.attn_dim);
    get("decoder_mid_dim", c.decoder_mid_dim);
    get("gnn_layers", c.gnn_layers);
    get("heads", c.heads);
    get("window", c.window);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("patience", c.patience);
    get("seed", c.seed);
    get("gamma", c.gamma);
    get("beta_i", c.beta_i);
    get("beta_s", c.beta_s);
    get("tau", c.tau);
    get("eta_i", c.eta_i);
    get("eta_s", c.eta_s);
    get("lambda_i", c.lambda_i);
    get("lambda_s", c.lambda_s);
    get("queue_size", c.queue_size);
    get("vote_threshold", c.vote_threshold);
    get("leaky_slope", c.leaky_slope);
    get("scl", c.scl);
    get("lowercase", c.lowercase);
    get("tie_stage_decoders", c.tie_stage_decoders);
    get("disable_s2i", c.disable_s2i);
    get("disable_i2s", c.disable_i2s);
    get("collapse_relations", c.collapse_relations);
    get("scale_by_attn_dim", c.scale_by_attn_dim);
    c.validate();
    return c;
  }

  // FNV-1a over the canonical JSON dump; stored in checkpoints.
  std::uint64_t hash() const {
    std::string s = to_json().dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

}  // namespace coguide
