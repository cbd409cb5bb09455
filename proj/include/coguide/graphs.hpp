#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "coguide/tensor.hpp"

namespace coguide {

enum class NodeType { IntentSemantic, SlotLabel, SlotSemantic, IntentLabel };

// Four relations per graph; each edge carries exactly one.
enum class Relation {
  // S2I-SLG
  IntentSemanticDep,          // I  -> I
  SlotToIntentGuidance,       // SL -> I
  SlotLabelDep,               // SL -> SL
  IntentToSlotLabelFeedback,  // I  -> SL
  // I2S-SLG
  SlotSemanticDep,            // S  -> S
  IntentToSlotGuidance,       // IL -> S
  IntentLabelDep,             // IL -> IL
  SlotToIntentLabelFeedback,  // S  -> IL
};

enum class GraphKind { SlotToIntent, IntentToSlot };

constexpr int kRelationsPerGraph = 4;

inline Relation relation_of(GraphKind kind, int slot) {
  static constexpr std::array<Relation, 4> s2i = {
      Relation::IntentSemanticDep, Relation::SlotToIntentGuidance,
      Relation::SlotLabelDep, Relation::IntentToSlotLabelFeedback};
  static constexpr std::array<Relation, 4> i2s = {
      Relation::SlotSemanticDep, Relation::IntentToSlotGuidance,
      Relation::IntentLabelDep, Relation::SlotToIntentLabelFeedback};
  require(slot >= 0 && slot < kRelationsPerGraph, "relation slot out of range");
  return kind == GraphKind::SlotToIntent ? s2i[static_cast<std::size_t>(slot)]
                                         : i2s[static_cast<std::size_t>(slot)];
}

inline std::pair<NodeType, NodeType> relation_signature(Relation r) {
  using N = NodeType;
  switch (r) {
    case Relation::IntentSemanticDep: return {N::IntentSemantic, N::IntentSemantic};
    case Relation::SlotToIntentGuidance: return {N::SlotLabel, N::IntentSemantic};
    case Relation::SlotLabelDep: return {N::SlotLabel, N::SlotLabel};
    case Relation::IntentToSlotLabelFeedback: return {N::IntentSemantic, N::SlotLabel};
    case Relation::SlotSemanticDep: return {N::SlotSemantic, N::SlotSemantic};
    case Relation::IntentToSlotGuidance: return {N::IntentLabel, N::SlotSemantic};
    case Relation::IntentLabelDep: return {N::IntentLabel, N::IntentLabel};
    case Relation::SlotToIntentLabelFeedback: return {N::SlotSemantic, N::IntentLabel};
  }
  throw std::runtime_error("unknown relation");
}

inline std::string relation_name(Relation r) {
  switch (r) {
    case Relation::IntentSemanticDep: return "IntentSemanticDep";
    case Relation::SlotToIntentGuidance: return "SlotToIntentGuidance";
    case Relation::SlotLabelDep: return "SlotLabelDep";
    case Relation::IntentToSlotLabelFeedback: return "IntentToSlotLabelFeedback";
    case Relation::SlotSemanticDep: return "SlotSemanticDep";
    case Relation::IntentToSlotGuidance: return "IntentToSlotGuidance";
    case Relation::IntentLabelDep: return "IntentLabelDep";
    case Relation::SlotToIntentLabelFeedback: return "SlotToIntentLabelFeedback";
  }
  return "?";
}

inline std::string node_name(NodeType t, int local_index) {
  switch (t) {
    case NodeType::IntentSemantic: return "I" + std::to_string(local_index);
    case NodeType::SlotLabel: return "SL" + std::to_string(local_index);
    case NodeType::SlotSemantic: return "S" + std::to_string(local_index);
    case NodeType::IntentLabel: return "IL" + std::to_string(local_index);
  }
  return "?";
}

// Typed nodes plus incoming adjacency grouped by (dst, relation slot) so that
// per-relation attention normalization is a direct lookup. Immutable after
// construction.
struct HeteroGraph {
  GraphKind kind;
  int node_count = 0;
  int semantic_count = 0;  // nodes [0, semantic_count) are semantic nodes
  std::vector<NodeType> node_types;
  // incoming[dst][slot] = sorted source ids connected to dst via relation slot
  std::vector<std::array<std::vector<int>, kRelationsPerGraph>> incoming;

  Relation relation_at(int slot) const { return relation_of(kind, slot); }

  bool has_edge(int src, int dst, Relation r) const {
    for (int slot = 0; slot < kRelationsPerGraph; ++slot) {
      if (relation_at(slot) != r) continue;
      const auto& srcs = incoming[static_cast<std::size_t>(dst)][static_cast<std::size_t>(slot)];
      return std::binary_search(srcs.begin(), srcs.end(), src);
    }
    return false;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& per_dst : incoming)
      for (const auto& srcs : per_dst) n += srcs.size();
    return n;
  }

  // "src dst relation" lines, sorted by (dst, relation, src); node names
  // encode type and local index (I0, SL3, S1, IL2).
  std::string edge_list() const {
    std::string out;
    for (int dst = 0; dst < node_count; ++dst) {
      for (int slot = 0; slot < kRelationsPerGraph; ++slot) {
        Relation r = relation_at(slot);
        for (int src : incoming[static_cast<std::size_t>(dst)][static_cast<std::size_t>(slot)]) {
          out += node_name(node_types[static_cast<std::size_t>(src)], local_index(src)) + " " +
                 node_name(node_types[static_cast<std::size_t>(dst)], local_index(dst)) + " " +
                 relation_name(r) + "\n";
        }
      }
    }
    return out;
  }

  int local_index(int node) const {
    return node < semantic_count ? node : node - semantic_count;
  }
};

namespace detail {
inline std::vector<int> window_sources(int i, int n, int w, int base) {
  std::vector<int> out;
  for (int j = std::max(0, i - w); j <= std::min(n - 1, i + w); ++j) out.push_back(base + j);
  return out;
}
}  // namespace detail

// S2I-SLG: nodes [0,n) are intent-semantic I_i, nodes [n,2n) are slot-label
// SL_i. All four relations use the self-inclusive window of size w.
inline HeteroGraph build_s2i_graph(int n, int w) {
  require(n >= 1, "build_s2i_graph: n must be >= 1");
  require(w >= 0, "build_s2i_graph: w must be >= 0");
  HeteroGraph g;
  g.kind = GraphKind::SlotToIntent;
  g.node_count = 2 * n;
  g.semantic_count = n;
  g.node_types.assign(static_cast<std::size_t>(2 * n), NodeType::IntentSemantic);
  for (int i = 0; i < n; ++i)
    g.node_types[static_cast<std::size_t>(n + i)] = NodeType::SlotLabel;
  g.incoming.resize(static_cast<std::size_t>(2 * n));
  for (int i = 0; i < n; ++i) {
    auto from_intent = detail::window_sources(i, n, w, 0);
    auto from_slot = detail::window_sources(i, n, w, n);
    // into I_i
    g.incoming[static_cast<std::size_t>(i)][0] = from_intent;  // IntentSemanticDep
    g.incoming[static_cast<std::size_t>(i)][1] = from_slot;    // SlotToIntentGuidance
    // into SL_i
    g.incoming[static_cast<std::size_t>(n + i)][2] = from_slot;    // SlotLabelDep
    g.incoming[static_cast<std::size_t>(n + i)][3] = from_intent;  // IntentToSlotLabelFeedback
  }
  return g;
}

// I2S-SLG: nodes [0,n) are slot-semantic S_i, nodes [n,n+m) are intent-label
// IL_k. S-S edges are windowed; every relation touching IL is global.
inline HeteroGraph build_i2s_graph(int n, int m, int w) {
  require(n >= 1, "build_i2s_graph: n must be >= 1");
  require(m >= 1, "build_i2s_graph: m must be >= 1");
  require(w >= 0, "build_i2s_graph: w must be >= 0");
  HeteroGraph g;
  g.kind = GraphKind::IntentToSlot;
  g.node_count = n + m;
  g.semantic_count = n;
  g.node_types.assign(static_cast<std::size_t>(n + m), NodeType::SlotSemantic);
  for (int k = 0; k < m; ++k)
    g.node_types[static_cast<std::size_t>(n + k)] = NodeType::IntentLabel;
  g.incoming.resize(static_cast<std::size_t>(n + m));
  std::vector<int> all_intents, all_slots;
  for (int k = 0; k < m; ++k) all_intents.push_back(n + k);
  for (int i = 0; i < n; ++i) all_slots.push_back(i);
  for (int i = 0; i < n; ++i) {
    g.incoming[static_cast<std::size_t>(i)][0] =
        detail::window_sources(i, n, w, 0);                   // SlotSemanticDep
    g.incoming[static_cast<std::size_t>(i)][1] = all_intents;  // IntentToSlotGuidance
  }
  for (int k = 0; k < m; ++k) {
    g.incoming[static_cast<std::size_t>(n + k)][2] = all_intents;  // IntentLabelDep
    g.incoming[static_cast<std::size_t>(n + k)][3] = all_slots;    // SlotToIntentLabelFeedback
  }
  return g;
}

}  // namespace coguide
