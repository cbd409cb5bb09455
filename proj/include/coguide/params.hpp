#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "coguide/config.hpp"
#include "coguide/graphs.hpp"
#include "coguide/tensor.hpp"

namespace coguide {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

using GradMap = std::map<std::string, Tensor>;

// Every learnable tensor, addressable by a stable path. std::map keeps
// iteration order stable so seeded init and optimizer sweeps are
// deterministic.
struct ModelParams {
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& path) {
    auto it = tensors.find(path);
    require(it != tensors.end(), "unknown parameter path '" + path + "'");
    return it->second;
  }
  const Tensor& at(const std::string& path) const {
    auto it = tensors.find(path);
    require(it != tensors.end(), "unknown parameter path '" + path + "'");
    return it->second;
  }
  bool has(const std::string& path) const { return tensors.count(path) > 0; }

  GradMap zero_grads() const {
    GradMap g;
    for (const auto& [path, t] : tensors) g.emplace(path, Tensor(t.shape()));
    return g;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [path, t] : tensors) n += static_cast<std::size_t>(t.numel());
    return n;
  }
};

namespace detail {
inline void add_lstm(std::map<std::string, Tensor>& m, const std::string& prefix,
                     int d_in, int d_hidden_each) {
  for (const char* dir : {"fw", "bw"}) {
    m.emplace(prefix + "." + dir + ".w_ih", Tensor({4 * d_hidden_each, d_in}));
    m.emplace(prefix + "." + dir + ".w_hh", Tensor({4 * d_hidden_each, d_hidden_each}));
    m.emplace(prefix + "." + dir + ".b", Tensor({4 * d_hidden_each}));
  }
}

inline void add_decoder(std::map<std::string, Tensor>& m, const std::string& prefix,
                        int d_in, int d_mid, int n_labels) {
  m.emplace(prefix + ".w1", Tensor({n_labels, d_mid}));
  m.emplace(prefix + ".b1", Tensor({n_labels}));
  m.emplace(prefix + ".w2", Tensor({d_mid, d_in}));
  m.emplace(prefix + ".b2", Tensor({d_mid}));
}
}  // namespace detail

// Builds the parameter inventory for given vocabulary sizes and fills every
// tensor with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = last dim.
inline ModelParams init_params(const TrainConfig& cfg, int n_words, int n_slots,
                               int n_intents) {
  cfg.validate();
  require(n_words >= 1 && n_slots >= 1 && n_intents >= 1, "init_params: empty vocabulary");
  ModelParams p;
  auto& m = p.tensors;

  m.emplace("embed.word", Tensor({n_words, cfg.word_emb_dim}));
  m.emplace("embed.slot_label", Tensor({n_slots, cfg.label_emb_dim}));
  m.emplace("embed.intent_label", Tensor({n_intents, cfg.label_emb_dim}));
  if (cfg.label_emb_dim != cfg.hidden_dim) {
    m.emplace("adapter.slot_label", Tensor({cfg.hidden_dim, cfg.label_emb_dim}));
    m.emplace("adapter.intent_label", Tensor({cfg.hidden_dim, cfg.label_emb_dim}));
  }

  detail::add_lstm(m, "enc.lstm", cfg.word_emb_dim, cfg.lstm_dim / 2);
  for (const char* w : {"wq", "wk", "wv"})
    m.emplace(std::string("enc.attn.") + w, Tensor({cfg.attn_dim, cfg.word_emb_dim}));

  int enc_out = cfg.lstm_dim + cfg.attn_dim;
  detail::add_lstm(m, "intent_lstm", enc_out, cfg.hidden_dim / 2);
  detail::add_lstm(m, "slot_lstm", enc_out, cfg.hidden_dim / 2);
  detail::add_lstm(m, "aware_lstm", n_intents + cfg.hidden_dim, cfg.hidden_dim / 2);

  detail::add_decoder(m, "dec.intent1", cfg.hidden_dim, cfg.decoder_mid_dim, n_intents);
  detail::add_decoder(m, "dec.slot1", cfg.hidden_dim, cfg.decoder_mid_dim, n_slots);
  if (!cfg.tie_stage_decoders) {
    detail::add_decoder(m, "dec.intent2", cfg.hidden_dim, cfg.decoder_mid_dim, n_intents);
    detail::add_decoder(m, "dec.slot2", cfg.hidden_dim, cfg.decoder_mid_dim, n_slots);
  }

  int d = cfg.hidden_dim;
  int dh = d / cfg.heads;
  int n_rel = cfg.collapse_relations ? 1 : kRelationsPerGraph;
  for (const char* graph : {"s2i", "i2s"}) {
    for (int l = 0; l < cfg.gnn_layers; ++l) {
      for (int r = 0; r < n_rel; ++r) {
        for (int k = 0; k < cfg.heads; ++k) {
          std::string prefix = std::string("hgat.") + graph + ".l" + std::to_string(l) +
                               ".r" + std::to_string(r) + ".h" + std::to_string(k);
          m.emplace(prefix + ".w1", Tensor({dh, d}));
          m.emplace(prefix + ".w2", Tensor({dh, d}));
          m.emplace(prefix + ".w3", Tensor({dh, d}));
        }
      }
    }
  }

  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&rng](double lo, double hi) {
    double u = (rng() >> 11) * (1.0 / 9007199254740992.0);
    return lo + u * (hi - lo);
  };
  for (auto& [path, t] : m) {
    int fan_in = t.shape().back();
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(-bound, bound);
  }
  return p;
}

// ---- checkpoint I/O: header (magic, version, config hash) then per-tensor
// records (path, shape, raw little-endian doubles). Bit-exact round trip. ----

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'C', 'G', 'C', 'P'};

namespace detail {
template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), "checkpoint: unexpected end of file");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(out, config_hash);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::write_pod<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  require(static_cast<bool>(out), "checkpoint write failed: " + path);
}

struct Checkpoint {
  ModelParams params;
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  require(static_cast<bool>(in) && std::memcmp(magic, kCheckpointMagic, 4) == 0,
          "not a checkpoint file: " + path);
  Checkpoint ck;
  ck.version = detail::read_pod<std::uint32_t>(in);
  require(ck.version == kCheckpointVersion, "unsupported checkpoint version");
  ck.config_hash = detail::read_pod<std::uint64_t>(in);
  auto count = detail::read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = detail::read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto rank = detail::read_pod<std::uint32_t>(in);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(detail::read_pod<std::int32_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    require(static_cast<bool>(in), "checkpoint: truncated tensor data");
    ck.params.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace coguide
