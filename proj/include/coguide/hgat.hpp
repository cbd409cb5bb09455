#pragma once

#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "coguide/graphs.hpp"
#include "coguide/nn.hpp"
#include "coguide/tape.hpp"

namespace coguide {

struct HgatOptions {
  int heads = 1;
  double leaky_slope = 0.01;
  bool collapse_relations = false;  // "w/o relations": one weight set, one
                                    // joint softmax -> plain multi-head GAT
  bool scale_by_attn_dim = false;   // divide logits by sqrt(d/heads) instead of sqrt(d)
};

// Relation- and head-specific projections of one layer. w[slot][head] =
// {value W1, query W2, key W3}; collapsed layers hold a single slot.
struct HgatLayerVars {
  std::vector<std::vector<std::array<Var, 3>>> w;
};

// Optional recorder of normalized attention weights, keyed by
// (dst node, head, relation slot), aligned with the incoming source order.
struct AttentionProbe {
  std::map<std::tuple<int, int, int>, std::vector<double>> alpha;
};

inline HgatLayerVars bind_hgat_layer(ParamBinding& pb, const std::string& graph,
                                     int layer, int heads, bool collapsed) {
  HgatLayerVars vars;
  int n_rel = collapsed ? 1 : kRelationsPerGraph;
  vars.w.resize(static_cast<std::size_t>(n_rel));
  for (int r = 0; r < n_rel; ++r) {
    vars.w[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(heads));
    for (int k = 0; k < heads; ++k) {
      std::string prefix = "hgat." + graph + ".l" + std::to_string(layer) + ".r" +
                           std::to_string(r) + ".h" + std::to_string(k);
      vars.w[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = {
          pb[prefix + ".w1"], pb[prefix + ".w2"], pb[prefix + ".w3"]};
    }
  }
  return vars;
}

// One heterogeneous graph attention layer. For node i and head k, attention
// logits (W2 h_i).(W3 h_j)/sqrt(d) are softmax-normalized within each
// relation's incoming neighborhood, value messages W1 h_j are summed across
// all incoming edges, and the nonlinearity is applied to that sum before
// concatenating heads. Relations weight themselves implicitly through their
// neighborhood sizes; there is no cross-relation renormalization.
inline std::vector<Var> hgat_layer(Tape& t, const HeteroGraph& g,
                                   const std::vector<Var>& h, const HgatLayerVars& vars,
                                   const HgatOptions& opt, AttentionProbe* probe = nullptr) {
  require(static_cast<int>(h.size()) == g.node_count, "hgat_layer: feature/node mismatch");
  int d = t.value(h[0]).dim(0);
  require(d % opt.heads == 0, "hgat_layer: feature dim not divisible by heads");
  double scale =
      1.0 / std::sqrt(static_cast<double>(opt.scale_by_attn_dim ? d / opt.heads : d));
  int n_slots_used = static_cast<int>(vars.w.size());

  // Cache W1 h_j / W3 h_j per (weight slot, head, source node).
  auto cache = [&](int r, int k, int widx, std::vector<Var>& memo, int j) {
    Var& slot = memo[static_cast<std::size_t>(j)];
    if (!slot.valid())
      slot = t.matvec(vars.w[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)]
                          [static_cast<std::size_t>(widx)],
                      h[static_cast<std::size_t>(j)]);
    return slot;
  };
  std::vector<std::vector<std::vector<Var>>> val_memo(
      static_cast<std::size_t>(n_slots_used),
      std::vector<std::vector<Var>>(static_cast<std::size_t>(opt.heads),
                                    std::vector<Var>(static_cast<std::size_t>(g.node_count))));
  std::vector<std::vector<std::vector<Var>>> key_memo = val_memo;

  std::vector<Var> out(static_cast<std::size_t>(g.node_count));
  for (int i = 0; i < g.node_count; ++i) {
    const auto& in_edges = g.incoming[static_cast<std::size_t>(i)];
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(opt.heads));
    for (int k = 0; k < opt.heads; ++k) {
      std::vector<Var> messages;
      auto attend = [&](const std::vector<int>& sources, int weight_slot) {
        if (sources.empty()) return;
        Var query = t.matvec(vars.w[static_cast<std::size_t>(weight_slot)]
                                 [static_cast<std::size_t>(k)][1],
                             h[static_cast<std::size_t>(i)]);
        std::vector<Var> logits;
        logits.reserve(sources.size());
        for (int j : sources)
          logits.push_back(
              t.scale(t.dot(query, cache(weight_slot, k, 2, key_memo[static_cast<std::size_t>(
                                                              weight_slot)][static_cast<std::size_t>(k)],
                                         j)),
                      scale));
        Var alpha = t.softmax(t.concat(logits));
        if (probe) {
          const Tensor& a = t.value(alpha);
          std::vector<double> weights(a.data(), a.data() + a.numel());
          probe->alpha[{i, k, weight_slot}] = std::move(weights);
        }
        for (std::size_t e = 0; e < sources.size(); ++e)
          messages.push_back(
              t.mul_sv(t.pick(alpha, static_cast<int>(e)),
                       cache(weight_slot, k, 0,
                             val_memo[static_cast<std::size_t>(weight_slot)]
                                     [static_cast<std::size_t>(k)],
                             sources[static_cast<std::size_t>(e)])));
      };
      if (opt.collapse_relations) {
        std::vector<int> merged;
        for (const auto& srcs : in_edges) merged.insert(merged.end(), srcs.begin(), srcs.end());
        attend(merged, 0);
      } else {
        for (int r = 0; r < kRelationsPerGraph; ++r)
          attend(in_edges[static_cast<std::size_t>(r)], r);
      }
      require(!messages.empty(), "hgat_layer: node " + std::to_string(i) +
                                     " has no incoming edges");
      head_outs.push_back(t.leaky_relu(t.add_n(messages), opt.leaky_slope));
    }
    out[static_cast<std::size_t>(i)] = t.concat(head_outs);
  }
  return out;
}

inline std::vector<Var> hgat_stack(Tape& t, const HeteroGraph& g, std::vector<Var> h,
                                   const std::vector<HgatLayerVars>& layers,
                                   const HgatOptions& opt) {
  require(!layers.empty(), "hgat_stack: need at least one layer");
  for (const auto& layer : layers) h = hgat_layer(t, g, h, layer, opt);
  return h;
}

}  // namespace coguide
