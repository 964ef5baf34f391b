/* Copyright 2026 The distplan Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distplan/common.hpp"

namespace distplan {

enum class NodeKind {
  kEmbedding,
  kTransformerBlock,
  kAttention,
  kMlp,
  kLayerNorm,
  kUnembedding,
  kMoeRouter,
  kExpert,
  kEncoder,
  kProjector,
  kPredictor,
  kEmaTarget,
  kLoss,
  kGeneric,
};

inline constexpr std::array<std::pair<NodeKind, std::string_view>, 14>
    kNodeKindNames{{
        {NodeKind::kEmbedding, "embedding"},
        {NodeKind::kTransformerBlock, "transformer_block"},
        {NodeKind::kAttention, "attention"},
        {NodeKind::kMlp, "mlp"},
        {NodeKind::kLayerNorm, "layernorm"},
        {NodeKind::kUnembedding, "unembedding"},
        {NodeKind::kMoeRouter, "moe_router"},
        {NodeKind::kExpert, "expert"},
        {NodeKind::kEncoder, "encoder"},
        {NodeKind::kProjector, "projector"},
        {NodeKind::kPredictor, "predictor"},
        {NodeKind::kEmaTarget, "ema_target"},
        {NodeKind::kLoss, "loss"},
        {NodeKind::kGeneric, "generic"},
    }};

inline std::string to_string(NodeKind kind) {
  for (const auto& [k, name] : kNodeKindNames) {
    if (k == kind) return std::string(name);
  }
  return "generic";
}

inline NodeKind parse_node_kind(std::string_view name) {
  for (const auto& [k, n] : kNodeKindNames) {
    if (n == name) return k;
  }
  throw ValidationError(str("unknown node kind '", name, "'"));
}

struct ParamTensor {
  std::string name;
  TensorShape shape;

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

// A parameterized function in the model DAG.
struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::kGeneric;
  std::vector<ParamTensor> params;
  std::map<std::string, double> attrs;

  double attr(const std::string& key, double fallback = 0.0) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second;
  }
  bool has_attr(const std::string& key) const { return attrs.count(key) > 0; }

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

// Activation flowing from `src` to `dst`.
struct Edge {
  std::string src;
  std::string dst;
  TensorShape shape;

  std::string key() const { return src + "->" + dst; }

  friend bool operator==(const Edge&, const Edge&) = default;
  friend bool operator<(const Edge& a, const Edge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  }
};

// Unvalidated graph contents, as produced by builders and deserializers.
struct GraphData {
  std::vector<NodeSpec> nodes;
  std::vector<Edge> edges;
};

// Deterministic Kahn ordering of `data`; ready nodes are released in id order.
// Throws ValidationError naming the nodes of one cycle when `data` is cyclic.
inline std::vector<std::string> topological_order(const GraphData& data) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& n : data.nodes) indegree.emplace(n.id, 0);
  for (const auto& e : data.edges) {
    if (!indegree.count(e.src) || !indegree.count(e.dst)) {
      throw ValidationError(
          str("edge ", e.key(), " references a node that does not exist"));
    }
    ++indegree[e.dst];
    succ[e.src].push_back(e.dst);
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>>
      ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<std::string> order;
  order.reserve(indegree.size());
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& next : succ[id]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  if (order.size() == indegree.size()) return order;

  // Walk predecessors among the unfinished nodes until one repeats.
  std::map<std::string, std::string> pred;
  for (const auto& e : data.edges) {
    if (indegree[e.src] > 0 && indegree[e.dst] > 0) pred[e.dst] = e.src;
  }
  std::string cur;
  for (const auto& [id, deg] : indegree) {
    if (deg > 0) {
      cur = id;
      break;
    }
  }
  std::vector<std::string> walk;
  std::map<std::string, std::size_t> seen;
  while (!seen.count(cur)) {
    seen[cur] = walk.size();
    walk.push_back(cur);
    cur = pred[cur];
  }
  std::vector<std::string> cycle(walk.begin() + seen[cur], walk.end());
  std::reverse(cycle.begin(), cycle.end());
  throw ValidationError(str("graph has a cycle through nodes [",
                            join(cycle, ", "), "]"));
}

// Validated, immutable DAG of parameterized nodes. Graph inputs are the nodes
// without incoming edges and outputs the nodes without outgoing edges.
class ModelGraph {
 public:
  ModelGraph() = default;

  static ModelGraph create(GraphData data) {
    ModelGraph g;
    if (data.nodes.empty()) throw ValidationError("graph has no nodes");
    for (auto& n : data.nodes) {
      if (n.id.empty()) throw ValidationError("node id must not be empty");
      for (const auto& p : n.params) p.shape.validate();
      std::string id = n.id;
      if (!g.nodes_.emplace(id, std::move(n)).second) {
        throw ValidationError(str("duplicate node id '", id, "'"));
      }
    }
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : data.edges) {
      if (!g.nodes_.count(e.src) || !g.nodes_.count(e.dst)) {
        throw ValidationError(
            str("edge ", e.key(), " references a node that does not exist"));
      }
      if (e.src == e.dst) {
        throw ValidationError(str("graph has a cycle through nodes [", e.src,
                                  "]"));
      }
      if (!seen.emplace(e.src, e.dst).second) {
        throw ValidationError(str("duplicate edge ", e.key()));
      }
      e.shape.validate();
    }
    g.edges_ = std::move(data.edges);
    GraphData view;
    for (const auto& [id, n] : g.nodes_) view.nodes.push_back(NodeSpec{id, n.kind, {}, {}});
    view.edges = g.edges_;
    g.order_ = distplan::topological_order(view);
    for (std::size_t i = 0; i < g.order_.size(); ++i) g.rank_[g.order_[i]] = i;
    for (std::size_t i = 0; i < g.edges_.size(); ++i) {
      g.out_[g.edges_[i].src].push_back(i);
      g.in_[g.edges_[i].dst].push_back(i);
    }
    auto by_rank = [&g](bool use_src) {
      return [&g, use_src](std::size_t a, std::size_t b) {
        const Edge& ea = g.edges_[a];
        const Edge& eb = g.edges_[b];
        const auto& ka = use_src ? ea.src : ea.dst;
        const auto& kb = use_src ? eb.src : eb.dst;
        return g.rank_.at(ka) < g.rank_.at(kb);
      };
    };
    for (auto& [id, list] : g.in_) std::stable_sort(list.begin(), list.end(), by_rank(true));
    for (auto& [id, list] : g.out_) std::stable_sort(list.begin(), list.end(), by_rank(false));
    return g;
  }

  const std::map<std::string, NodeSpec>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }

  const NodeSpec& node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ValidationError(str("no node '", id, "'"));
    return it->second;
  }
  bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }

  // Edge indices into edges(), ordered by the topological rank of the
  // other endpoint.
  const std::vector<std::size_t>& in_edges(const std::string& id) const {
    auto it = in_.find(id);
    return it == in_.end() ? empty_ : it->second;
  }
  const std::vector<std::size_t>& out_edges(const std::string& id) const {
    auto it = out_.find(id);
    return it == out_.end() ? empty_ : it->second;
  }

  const std::vector<std::string>& topological_order() const { return order_; }
  std::size_t topo_rank(const std::string& id) const { return rank_.at(id); }

  std::vector<std::string> inputs() const {
    std::vector<std::string> ids;
    for (const auto& id : order_) {
      if (in_edges(id).empty()) ids.push_back(id);
    }
    return ids;
  }
  std::vector<std::string> outputs() const {
    std::vector<std::string> ids;
    for (const auto& id : order_) {
      if (out_edges(id).empty()) ids.push_back(id);
    }
    return ids;
  }

  std::optional<std::size_t> find_edge(const std::string& key) const {
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      if (edges_[i].key() == key) return i;
    }
    return std::nullopt;
  }

  GraphData data() const {
    GraphData d;
    for (const auto& id : order_) d.nodes.push_back(nodes_.at(id));
    d.edges = edges_;
    return d;
  }

  // Node and edge sets compare equal; insertion order is irrelevant.
  friend bool operator==(const ModelGraph& a, const ModelGraph& b) {
    if (a.nodes_ != b.nodes_) return false;
    auto ea = a.edges_;
    auto eb = b.edges_;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return ea == eb;
  }

 private:
  std::map<std::string, NodeSpec> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::size_t> rank_;
  std::unordered_map<std::string, std::vector<std::size_t>> in_;
  std::unordered_map<std::string, std::vector<std::size_t>> out_;
  std::vector<std::size_t> empty_;
};

inline std::vector<std::string> topological_order(const ModelGraph& g) {
  return g.topological_order();
}

// ----------------------------------------------------------------------------
// Transformer configuration
// ----------------------------------------------------------------------------

inline constexpr std::int64_t kDefaultVocab = 32000;

struct TransformerConfig {
  std::int64_t hidden = 0;
  std::int64_t layers = 0;
  std::int64_t heads = 0;
  std::optional<std::int64_t> ffn_hidden;  // 4 * hidden when unset
  std::optional<std::int64_t> vocab;       // kDefaultVocab when unset
  std::int64_t seq_len = 2048;
  std::int64_t batch = 1;
  DType dtype = DType::kFloat32;
  bool include_biases = true;

  std::int64_t ffn() const { return ffn_hidden.value_or(4 * hidden); }
  std::int64_t vocab_size() const { return vocab.value_or(kDefaultVocab); }

  void validate() const {
    auto positive = [](std::int64_t v, const char* name) {
      if (v < 1) throw ValidationError(str(name, " must be >= 1, got ", v));
    };
    positive(hidden, "hidden");
    positive(heads, "heads");
    positive(seq_len, "seq_len");
    positive(batch, "batch");
    positive(ffn(), "ffn_hidden");
    positive(vocab_size(), "vocab");
    if (layers < 0) throw ValidationError(str("layers must be >= 0, got ", layers));
    if (hidden % heads != 0) {
      throw ValidationError(str("hidden ", hidden,
                                " is not divisible by heads ", heads));
    }
  }

  friend bool operator==(const TransformerConfig&,
                         const TransformerConfig&) = default;
};

namespace detail {

inline TensorShape shape(std::vector<std::int64_t> dims,
                         std::vector<std::string> names, DType dtype) {
  return TensorShape{std::move(dims), std::move(names), dtype};
}

inline TensorShape activation(const TransformerConfig& c, std::int64_t width,
                              const std::string& last = "embed") {
  return shape({c.batch, c.seq_len, width}, {"batch", "seq", last}, c.dtype);
}

inline void add_attention_params(std::vector<ParamTensor>& p,
                                 const TransformerConfig& c,
                                 const std::string& prefix) {
  const auto h = c.hidden;
  p.push_back({prefix + "ln1_gain", shape({h}, {"embed"}, c.dtype)});
  p.push_back({prefix + "ln1_bias", shape({h}, {"embed"}, c.dtype)});
  p.push_back({prefix + "qkv", shape({h, 3 * h}, {"embed", "qkv"}, c.dtype)});
  if (c.include_biases) {
    p.push_back({prefix + "qkv_bias", shape({3 * h}, {"qkv"}, c.dtype)});
  }
  p.push_back({prefix + "out", shape({h, h}, {"heads", "embed"}, c.dtype)});
  if (c.include_biases) {
    p.push_back({prefix + "out_bias", shape({h}, {"embed"}, c.dtype)});
  }
  p.push_back({prefix + "ln2_gain", shape({h}, {"embed"}, c.dtype)});
  p.push_back({prefix + "ln2_bias", shape({h}, {"embed"}, c.dtype)});
}

inline void add_mlp_params(std::vector<ParamTensor>& p,
                           const TransformerConfig& c,
                           const std::string& prefix) {
  const auto h = c.hidden;
  const auto f = c.ffn();
  p.push_back({prefix + "mlp_in", shape({h, f}, {"embed", "ffn"}, c.dtype)});
  if (c.include_biases) {
    p.push_back({prefix + "mlp_in_bias", shape({f}, {"ffn"}, c.dtype)});
  }
  p.push_back({prefix + "mlp_out", shape({f, h}, {"ffn", "embed"}, c.dtype)});
  if (c.include_biases) {
    p.push_back({prefix + "mlp_out_bias", shape({h}, {"embed"}, c.dtype)});
  }
}

inline std::map<std::string, double> block_attrs(const TransformerConfig& c,
                                                 std::int64_t index) {
  return {{"hidden", double(c.hidden)},
          {"heads", double(c.heads)},
          {"ffn_hidden", double(c.ffn())},
          {"seq", double(c.seq_len)},
          {"batch", double(c.batch)},
          {"block", double(index)}};
}

inline std::string block_id(std::int64_t i) { return str("block_", i); }

// Emits embed -> blocks -> unembed -> loss; `moe_blocks` selects blocks whose
// MLP is replaced by a router fanning out to `experts` experts.
inline GraphData transformer_graph(const TransformerConfig& c,
                                   const std::set<std::int64_t>& moe_blocks,
                                   std::int64_t experts) {
  GraphData d;
  const auto h = c.hidden;
  const auto v = c.vocab_size();
  d.nodes.push_back(NodeSpec{
      "embed", NodeKind::kEmbedding,
      {{"table", shape({v, h}, {"vocab", "embed"}, c.dtype)}},
      {{"hidden", double(h)}, {"vocab", double(v)}}});

  std::vector<std::string> frontier{"embed"};
  auto connect = [&](const std::string& dst, const TensorShape& s) {
    for (const auto& src : frontier) d.edges.push_back({src, dst, s});
  };
  for (std::int64_t i = 0; i < c.layers; ++i) {
    const std::string id = block_id(i);
    if (!moe_blocks.count(i)) {
      NodeSpec block{id, NodeKind::kTransformerBlock, {}, block_attrs(c, i)};
      add_attention_params(block.params, c, "");
      add_mlp_params(block.params, c, "");
      connect(id, activation(c, h));
      d.nodes.push_back(std::move(block));
      frontier = {id};
      continue;
    }
    NodeSpec attn{id, NodeKind::kAttention, {}, block_attrs(c, i)};
    attn.attrs.erase("ffn_hidden");
    add_attention_params(attn.params, c, "");
    connect(id, activation(c, h));
    d.nodes.push_back(std::move(attn));

    const std::string router = id + ".router";
    d.nodes.push_back(NodeSpec{
        router, NodeKind::kMoeRouter,
        {{"gate", shape({h, experts}, {"embed", "experts"}, c.dtype)}},
        {{"block", double(i)}, {"experts", double(experts)}}});
    d.edges.push_back({id, router, activation(c, h)});

    frontier.clear();
    for (std::int64_t e = 0; e < experts; ++e) {
      const std::string expert = str(id, ".expert_", e);
      NodeSpec node{expert, NodeKind::kExpert, {},
                    {{"block", double(i)}, {"expert", double(e)}}};
      add_mlp_params(node.params, c, "");
      d.nodes.push_back(std::move(node));
      d.edges.push_back({router, expert, activation(c, h)});
      frontier.push_back(expert);
    }
  }
  d.nodes.push_back(NodeSpec{
      "unembed", NodeKind::kUnembedding,
      {{"weight", shape({h, v}, {"embed", "vocab"}, c.dtype)}},
      {{"hidden", double(h)}, {"vocab", double(v)}}});
  connect("unembed", activation(c, h));
  d.nodes.push_back(NodeSpec{"loss", NodeKind::kLoss, {}, {}});
  d.edges.push_back({"unembed", "loss", activation(c, v, "vocab")});
  return d;
}

}  // namespace detail

inline ModelGraph build_decoder_only(const TransformerConfig& cfg) {
  cfg.validate();
  return ModelGraph::create(detail::transformer_graph(cfg, {}, 1));
}

// Every `moe_every`-th block (1-based) gets a routed MLP. A single expert has
// nothing to route, so experts == 1 yields the dense decoder.
inline ModelGraph build_moe(const TransformerConfig& cfg, std::int64_t experts,
                            std::int64_t moe_every) {
  cfg.validate();
  if (experts < 1) throw ValidationError(str("experts must be >= 1, got ", experts));
  if (moe_every < 1) {
    throw ValidationError(str("moe_every must be >= 1, got ", moe_every));
  }
  std::set<std::int64_t> moe_blocks;
  if (experts > 1) {
    for (std::int64_t i = moe_every - 1; i < cfg.layers; i += moe_every) {
      moe_blocks.insert(i);
    }
  }
  return ModelGraph::create(detail::transformer_graph(cfg, moe_blocks, experts));
}

// Online branch encoder -> projector -> predictor and EMA target branch
// encoder -> projector, joined at the loss.
inline ModelGraph build_byol(const TransformerConfig& encoder_cfg,
                             std::int64_t projector_dim,
                             std::int64_t predictor_dim) {
  encoder_cfg.validate();
  if (projector_dim < 1 || predictor_dim < 1) {
    throw ValidationError(str("projector_dim and predictor_dim must be >= 1, got ",
                              projector_dim, " and ", predictor_dim));
  }
  const auto& c = encoder_cfg;
  const auto h = c.hidden;
  using detail::shape;

  auto encoder = [&](const std::string& id, NodeKind kind) {
    NodeSpec n{id, kind, {}, {}};
    n.params.push_back({"embedding", shape({c.vocab_size(), h}, {"vocab", "embed"}, c.dtype)});
    for (std::int64_t i = 0; i < c.layers; ++i) {
      const std::string prefix = str("block", i, ".");
      detail::add_attention_params(n.params, c, prefix);
      detail::add_mlp_params(n.params, c, prefix);
    }
    n.attrs = {{"hidden", double(h)},
               {"heads", double(c.heads)},
               {"layers", double(c.layers)},
               {"seq", double(c.seq_len)},
               {"batch", double(c.batch)},
               {"pool", 1.0}};
    return n;
  };
  auto projector = [&](const std::string& id) {
    NodeSpec n{id, NodeKind::kProjector, {}, {}};
    n.params.push_back({"w", shape({h, projector_dim}, {"embed", "proj"}, c.dtype)});
    if (c.include_biases) {
      n.params.push_back({"b", shape({projector_dim}, {"proj"}, c.dtype)});
    }
    return n;
  };
  NodeSpec predictor{"online.predictor", NodeKind::kPredictor, {}, {}};
  predictor.params.push_back(
      {"w_in", shape({projector_dim, predictor_dim}, {"proj", "pred"}, c.dtype)});
  if (c.include_biases) {
    predictor.params.push_back({"b_in", shape({predictor_dim}, {"pred"}, c.dtype)});
  }
  predictor.params.push_back(
      {"w_out", shape({predictor_dim, projector_dim}, {"pred", "proj"}, c.dtype)});
  if (c.include_biases) {
    predictor.params.push_back({"b_out", shape({projector_dim}, {"proj"}, c.dtype)});
  }

  GraphData d;
  d.nodes.push_back(encoder("online.encoder", NodeKind::kEncoder));
  d.nodes.push_back(projector("online.projector"));
  d.nodes.push_back(std::move(predictor));
  d.nodes.push_back(encoder("target.encoder", NodeKind::kEmaTarget));
  d.nodes.push_back(projector("target.projector"));
  d.nodes.push_back(NodeSpec{"loss", NodeKind::kLoss, {}, {}});

  auto pooled = shape({c.batch, h}, {"batch", "embed"}, c.dtype);
  auto projected = shape({c.batch, projector_dim}, {"batch", "proj"}, c.dtype);
  d.edges = {{"online.encoder", "online.projector", pooled},
             {"online.projector", "online.predictor", projected},
             {"online.predictor", "loss", projected},
             {"target.encoder", "target.projector", pooled},
             {"target.projector", "loss", projected}};
  return ModelGraph::create(std::move(d));
}

// Leading extent of activations labelled "batch", when the graph has any.
inline std::optional<std::int64_t> graph_batch(const ModelGraph& g) {
  for (const auto& e : g.edges()) {
    if (!e.shape.axis_names.empty() && e.shape.axis_names[0] == "batch") {
      return e.shape.dims[0];
    }
  }
  return std::nullopt;
}

}  // namespace distplan
