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
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "distplan/analysis.hpp"
#include "distplan/mesh.hpp"
#include "distplan/model_ir.hpp"
#include "distplan/node_program.hpp"

namespace distplan {

enum class CollectiveKind { kAllReduce, kAllGather, kReduceScatter, kAllToAll };

inline std::string to_string(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::kAllReduce: return "all_reduce";
    case CollectiveKind::kAllGather: return "all_gather";
    case CollectiveKind::kReduceScatter: return "reduce_scatter";
    case CollectiveKind::kAllToAll: return "all_to_all";
  }
  return "all_reduce";
}

// kGradient collectives synchronize parameter gradients across the mesh axes
// that split the batch; they run after the node's backward pass.
enum class Phase { kForward, kBackward, kGradient };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::kForward: return "forward";
    case Phase::kBackward: return "backward";
    case Phase::kGradient: return "gradient";
  }
  return "forward";
}

struct Collective {
  std::string site;      // node id, or edge key when edge_site
  bool edge_site = false;
  std::string node;      // node whose step issues the collective
  CollectiveKind kind = CollectiveKind::kAllReduce;
  Phase phase = Phase::kForward;
  std::int64_t payload_bytes = 0;  // per-device buffer
  std::vector<std::string> axes;
  std::int64_t group_size = 1;
  std::string tensor;    // tensor whose reduction or redistribution it is

  friend bool operator==(const Collective&, const Collective&) = default;
};

// Per-device compute for one node under an assignment.
struct NodeCompute {
  double forward_flops = 0;
  double attention_flops = 0;  // forward share spent in attention scores

  friend bool operator==(const NodeCompute&, const NodeCompute&) = default;
};

using SpecMap = std::map<std::string, PartitionSpec>;

inline std::string param_key(const std::string& node, const std::string& param) {
  return node + "/" + param;
}

struct ShardingAssignment {
  LogicalMesh mesh;
  SpecMap specs;                               // every edge and param tensor
  std::map<std::string, TensorShape> shapes;   // logical shapes by tensor key
  std::vector<Collective> collectives;
  std::map<std::string, NodeCompute> compute;  // by node id

  const PartitionSpec& spec(const std::string& key) const {
    auto it = specs.find(key);
    if (it == specs.end()) throw ValidationError(str("assignment has no tensor '", key, "'"));
    return it->second;
  }

  TensorShape local_shape(const std::string& key) const {
    return shard_shape(shapes.at(key), spec(key), mesh);
  }

  std::size_t count(CollectiveKind kind, Phase phase) const {
    return std::count_if(collectives.begin(), collectives.end(), [&](const Collective& c) {
      return c.kind == kind && c.phase == phase;
    });
  }

  std::vector<const Collective*> at_node(const std::string& node, Phase phase) const {
    std::vector<const Collective*> out;
    for (const auto& c : collectives) {
      if (c.node == node && c.phase == phase) out.push_back(&c);
    }
    return out;
  }

  friend bool operator==(const ShardingAssignment&, const ShardingAssignment&) = default;
};

// All tensors of `g` keyed as in ShardingAssignment: edges by "src->dst",
// params by "node/param".
inline std::map<std::string, TensorShape> tensor_shapes(const ModelGraph& g) {
  std::map<std::string, TensorShape> out;
  for (const auto& e : g.edges()) out.emplace(e.key(), e.shape);
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& p : n.params) out.emplace(param_key(id, p.name), p.shape);
  }
  return out;
}

namespace detail {

using Dims = std::vector<std::int64_t>;
using AxisLists = std::vector<std::vector<std::string>>;

inline std::vector<std::string> minus(const std::vector<std::string>& a,
                                      const std::set<std::string>& b) {
  std::vector<std::string> out;
  for (const auto& x : a) {
    if (!b.count(x)) out.push_back(x);
  }
  return out;
}

inline std::vector<std::string> intersect(const std::vector<std::string>& a,
                                          const std::set<std::string>& b) {
  std::vector<std::string> out;
  for (const auto& x : a) {
    if (b.count(x)) out.push_back(x);
  }
  return out;
}

inline std::set<std::string> axis_set(const AxisLists& lists) {
  std::set<std::string> s;
  for (const auto& l : lists) s.insert(l.begin(), l.end());
  return s;
}

class Propagator {
 public:
  Propagator(const ModelGraph& g, const LogicalMesh& mesh, SpecMap hard)
      : g_(g), mesh_(mesh), hard_(std::move(hard)) {}

  ShardingAssignment run() {
    out_.mesh = mesh_;
    out_.shapes = tensor_shapes(g_);
    compute_hints();
    for (const auto& id : g_.topological_order()) visit(id);
    for (const auto& [key, shape] : out_.shapes) {
      if (!out_.specs.count(key)) {
        throw InvariantError(str("propagation left tensor '", key, "' unassigned"));
      }
    }
    return std::move(out_);
  }

 private:
  std::int64_t bytes(const Dims& dims, const AxisLists& spec, DType dt) const {
    std::int64_t n = byte_width(dt);
    for (std::size_t i = 0; i < dims.size(); ++i) n *= dims[i] / mesh_.axes_product(spec[i]);
    return n;
  }

  void check_divisible(const Dims& dims, const AxisLists& spec, const std::string& what) const {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      const auto d = mesh_.axes_product(spec[i]);
      if (dims[i] % d != 0) {
        throw ValidationError(str(what, ": tensor axis ", i, " with extent ", dims[i],
                                  " is not divisible by ", d, " (mesh axes ",
                                  join(spec[i], "+"), ")"));
      }
    }
  }

  void emit(const std::string& site, bool edge_site, const std::string& node,
            CollectiveKind kind, Phase phase, std::int64_t payload,
            std::vector<std::string> axes, const std::string& tensor) {
    const auto group = mesh_.axes_product(axes);
    if (group <= 1) return;
    out_.collectives.push_back(
        Collective{site, edge_site, node, kind, phase, payload, std::move(axes), group, tensor});
  }

  // Backward pass: unconstrained edges feeding a spec-preserving node inherit
  // the spec already known for that node's output.
  void compute_hints() {
    const auto& order = g_.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::string& id = *it;
      for (auto idx : g_.out_edges(id)) {
        const Edge& e = g_.edges()[idx];
        if (auto h = hard_.find(e.key()); h != hard_.end()) hints_[e.key()] = h->second;
      }
      for (auto idx : g_.in_edges(id)) {
        const Edge& e = g_.edges()[idx];
        if (hard_.count(e.key())) {
          hints_[e.key()] = hard_.at(e.key());
          continue;
        }
        if (!preserving(id) || g_.out_edges(id).empty()) continue;
        const Edge& f = g_.edges()[g_.out_edges(id).front()];
        if (f.shape.dims == e.shape.dims && hints_.count(f.key())) {
          hints_[e.key()] = hints_.at(f.key());
        }
      }
    }
  }

  bool preserving(const std::string& id) const {
    for (const auto& st : node_program(g_, id).stages) {
      if (st.kind != StageKind::kElementwise && st.kind != StageKind::kOpaque) return false;
    }
    return true;
  }

  PartitionSpec param_spec_or(const std::string& key, AxisLists fallback) {
    if (auto it = hard_.find(key); it != hard_.end()) return it->second;
    return PartitionSpec{std::move(fallback)};
  }

  // Redistribution of one activation from `from` to `to`: axes that move
  // between tensor dims need an all-to-all, dropped axes an all-gather, and
  // newly added axes are a local slice.
  void reshard(const std::string& site, bool edge_site, const std::string& node,
               const std::string& tensor, const Dims& dims, DType dt,
               const AxisLists& from, const AxisLists& to) {
    std::map<std::string, std::size_t> where_from, where_to;
    for (std::size_t i = 0; i < from.size(); ++i) {
      for (const auto& a : from[i]) where_from[a] = i;
    }
    for (std::size_t i = 0; i < to.size(); ++i) {
      for (const auto& a : to[i]) where_to[a] = i;
    }
    std::vector<std::string> moved, removed;
    for (const auto& [a, i] : where_from) {
      auto it = where_to.find(a);
      if (it == where_to.end()) {
        removed.push_back(a);
      } else if (it->second != i) {
        moved.push_back(a);
      }
    }
    if (!moved.empty()) {
      const auto payload = bytes(dims, from, dt);
      emit(site, edge_site, node, CollectiveKind::kAllToAll, Phase::kForward, payload, moved, tensor);
      emit(site, edge_site, node, CollectiveKind::kAllToAll, Phase::kBackward, payload, moved, tensor);
    }
    if (!removed.empty()) {
      AxisLists gathered = from;
      std::set<std::string> rm(removed.begin(), removed.end());
      for (auto& l : gathered) l = minus(l, rm);
      const auto payload = bytes(dims, gathered, dt);
      emit(site, edge_site, node, CollectiveKind::kAllGather, Phase::kForward, payload, removed, tensor);
      emit(site, edge_site, node, CollectiveKind::kReduceScatter, Phase::kBackward, payload, removed, tensor);
    }
  }

  void gradient_sync(const std::string& id, const std::string& key, const TensorShape& s,
                     const AxisLists& pspec, const std::set<std::string>& lead_axes) {
    auto axes = minus(std::vector<std::string>(lead_axes.begin(), lead_axes.end()),
                      axis_set(pspec));
    emit(id, false, id, CollectiveKind::kAllReduce, Phase::kGradient,
         bytes(s.dims, pspec, s.dtype), axes, key);
  }

  void visit(const std::string& id) {
    const NodeSpec& n = g_.node(id);
    const NodeProgram prog = node_program(g_, id);
    const auto& ins = g_.in_edges(id);
    const auto& outs = g_.out_edges(id);
    NodeCompute nc;

    if (!prog.has_activation) {
      for (const auto& p : n.params) {
        const auto key = param_key(id, p.name);
        out_.specs[key] = param_spec_or(key, AxisLists(p.shape.rank()));
      }
      out_.compute[id] = nc;
      return;
    }

    DType act_dtype = !ins.empty() ? g_.edges()[ins.front()].shape.dtype
                                   : g_.edges()[outs.front()].shape.dtype;
    AxisLists act;
    Dims dims = prog.input_dims;
    if (!ins.empty()) {
      const Edge& primary = g_.edges()[ins.front()];
      std::size_t winner = ins.front();
      std::int64_t best = -1;
      for (auto idx : ins) {
        const Edge& e = g_.edges()[idx];
        if (e.shape.dims != primary.shape.dims) continue;
        const auto& sp = out_.specs.at(e.key()).dims;
        const auto moved = e.shape.byte_size() - bytes(e.shape.dims, sp, e.shape.dtype);
        if (moved > best) best = moved, winner = idx;
      }
      act = out_.specs.at(g_.edges()[winner].key()).dims;
      for (auto idx : ins) {
        const Edge& e = g_.edges()[idx];
        if (idx == winner || e.shape.dims != primary.shape.dims) continue;
        reshard(e.key(), true, id, e.key(), e.shape.dims, e.shape.dtype,
                out_.specs.at(e.key()).dims, act);
      }
    } else {
      const Edge& e = g_.edges()[outs.front()];
      AxisLists hint = hints_.count(e.key()) ? hints_.at(e.key()).dims
                                             : AxisLists(e.shape.rank());
      const bool passthrough = std::all_of(prog.stages.begin(), prog.stages.end(), [](const Stage& s) {
        return s.kind == StageKind::kElementwise || s.kind == StageKind::kOpaque;
      });
      if (passthrough) {
        act = hint;
      } else {
        act.assign(hint.begin(), hint.end() - 1);
        // Pooling nodes see a sequence axis their output edge does not carry.
        const std::size_t lead_rank = detail::has_lookup(n) ? dims.size() : dims.size() - 1;
        while (act.size() < lead_rank) {
          act.insert(act.begin() + std::min<std::size_t>(1, act.size()), std::vector<std::string>{});
        }
        if (!detail::has_lookup(n)) act.push_back({});
      }
    }
    check_divisible(dims, act, str("input of node '", id, "'"));

    for (const auto& st : prog.stages) apply(id, n, st, act, dims, act_dtype, nc);

    for (const auto& p : n.params) {
      const auto key = param_key(id, p.name);
      if (!out_.specs.count(key)) {
        out_.specs[key] = param_spec_or(key, AxisLists(p.shape.rank()));
      }
    }
    for (auto idx : outs) {
      const Edge& e = g_.edges()[idx];
      auto it = hard_.find(e.key());
      if (it != hard_.end() && it->second.dims != act) {
        reshard(e.key(), true, id, e.key(), e.shape.dims, e.shape.dtype, act, it->second.dims);
        out_.specs[e.key()] = it->second;
      } else {
        out_.specs[e.key()] = PartitionSpec{act};
      }
      shard_shape(e.shape, out_.specs[e.key()], mesh_);
    }
    out_.compute[id] = nc;
  }

  void apply(const std::string& id, const NodeSpec& n, const Stage& st, AxisLists& act,
             Dims& dims, DType dt, NodeCompute& nc) {
    const bool lookup = st.kind == StageKind::kLookup;
    AxisLists lead(act.begin(), lookup ? act.end() : act.end() - 1);
    Dims lead_dims(dims.begin(), lookup ? dims.end() : dims.end() - 1);
    const std::set<std::string> lead_axes = axis_set(lead);
    double local_rows = 1;
    for (std::size_t i = 0; i < lead.size(); ++i) {
      local_rows *= double(lead_dims[i] / mesh_.axes_product(lead[i]));
    }
    const ParamTensor* param = st.param >= 0 ? &n.params[st.param] : nullptr;
    const std::string key = param ? param_key(id, param->name) : std::string();

    switch (st.kind) {
      case StageKind::kLookup: {
        const PartitionSpec ws = param_spec_or(key, AxisLists(2));
        out_.specs[key] = ws;
        auto vocab = ws.dims[0];
        auto col = ws.dims[1];
        auto clash = intersect(vocab, lead_axes);
        auto clash_col = intersect(col, lead_axes);
        clash.insert(clash.end(), clash_col.begin(), clash_col.end());
        if (!clash.empty()) {
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward,
               bytes(param->shape.dims, AxisLists(2), param->shape.dtype), clash, key);
          vocab = minus(vocab, lead_axes);
          col = minus(col, lead_axes);
        }
        AxisLists out = lead;
        out.push_back(col);
        Dims out_dims = lead_dims;
        out_dims.push_back(st.out_width);
        check_divisible(out_dims, out, str("output of lookup '", key, "'"));
        emit(id, false, id, CollectiveKind::kAllReduce, Phase::kForward,
             bytes(out_dims, out, dt), vocab, key);
        gradient_sync(id, key, param->shape, ws.dims, lead_axes);
        act = std::move(out);
        dims = std::move(out_dims);
        return;
      }
      case StageKind::kMatmul: {
        const auto sa = act.back();
        const PartitionSpec ws = param_spec_or(key, AxisLists{sa, {}});
        out_.specs[key] = ws;
        auto w_in = ws.dims[0];
        auto w_out = ws.dims[1];
        std::vector<std::string> w_gather = intersect(w_in, lead_axes);
        auto g2 = intersect(w_out, lead_axes);
        w_gather.insert(w_gather.end(), g2.begin(), g2.end());
        if (!w_gather.empty()) {
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward,
               bytes(param->shape.dims, AxisLists(2), param->shape.dtype), w_gather, key);
          w_in = minus(w_in, lead_axes);
          w_out = minus(w_out, lead_axes);
        }
        const std::set<std::string> out_set(w_out.begin(), w_out.end());
        std::vector<std::string> partial;
        std::vector<std::string> x_last;
        bool x_sliced = false;
        if (sa == w_in) {
          partial = sa;
          x_last = sa;
        } else if (sa.empty()) {
          partial = w_in;
          x_sliced = true;
        } else if (w_in.empty() && intersect(sa, out_set).empty()) {
          partial = sa;
          x_last = sa;
        } else {
          AxisLists gathered = lead;
          gathered.push_back({});
          const auto payload = bytes(dims, gathered, dt);
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward, payload, sa, key);
          emit(id, false, id, CollectiveKind::kReduceScatter, Phase::kBackward, payload, sa, key);
          partial = w_in;
          x_sliced = !w_in.empty();
        }
        AxisLists out = lead;
        out.push_back(w_out);
        Dims out_dims = lead_dims;
        out_dims.push_back(st.out_width);
        check_divisible(out_dims, out, str("output of matmul '", key, "'"));
        emit(id, false, id, CollectiveKind::kAllReduce, Phase::kForward,
             bytes(out_dims, out, dt), partial, key);
        AxisLists x_spec = lead;
        x_spec.push_back(x_last);
        emit(id, false, id, CollectiveKind::kAllReduce, Phase::kBackward,
             bytes(dims, x_spec, dt), w_out, key);
        if (x_sliced) {
          AxisLists x_full = lead;
          x_full.push_back({});
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kBackward,
               bytes(dims, x_full, dt), partial, key);
        }
        gradient_sync(id, key, param->shape, AxisLists{w_in, w_out}, lead_axes);
        nc.forward_flops += 2.0 * local_rows *
                            double(st.in_width / mesh_.axes_product(partial)) *
                            double(st.out_width / mesh_.axes_product(w_out));
        act = std::move(out);
        dims = std::move(out_dims);
        return;
      }
      case StageKind::kGate: {
        const auto sa = act.back();
        const PartitionSpec ws = param_spec_or(key, AxisLists{sa, {}});
        out_.specs[key] = ws;
        auto w_in = minus(ws.dims[0], lead_axes);
        std::vector<std::string> partial = sa.empty() ? w_in : sa;
        if (!sa.empty() && !w_in.empty() && sa != w_in) {
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward,
               bytes(param->shape.dims, AxisLists(2), param->shape.dtype), w_in, key);
        }
        AxisLists logits = lead;
        logits.push_back({});
        Dims logit_dims = lead_dims;
        logit_dims.push_back(param->shape.dims[1]);
        emit(id, false, id, CollectiveKind::kAllReduce, Phase::kForward,
             bytes(logit_dims, logits, dt), partial, key);
        gradient_sync(id, key, param->shape, ws.dims, lead_axes);
        nc.forward_flops += 2.0 * local_rows *
                            double(param->shape.dims[0] / mesh_.axes_product(partial)) *
                            double(param->shape.dims[1]);
        return;
      }
      case StageKind::kAttention: {
        const auto& heads_axes = act.back();
        const std::int64_t k = mesh_.axes_product(heads_axes);
        const auto heads = static_cast<std::int64_t>(n.attr("heads", 1.0));
        if (heads % k != 0) {
          throw ValidationError(str("node '", id, "': heads=", heads,
                                    " is not divisible by tensor-parallel order tp=", k));
        }
        if (!lead.empty() && !lead.back().empty()) {
          AxisLists kv = act;
          kv[kv.size() - 2] = {};
          const auto payload = bytes(dims, kv, dt) / 3 * 2;
          emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward, payload, lead.back(), id);
          emit(id, false, id, CollectiveKind::kReduceScatter, Phase::kBackward, payload, lead.back(), id);
        }
        dims.back() = st.out_width;
        check_divisible(dims, act, str("attention output of node '", id, "'"));
        const double seq = lead_dims.empty() ? 1.0 : double(lead_dims.back());
        const double flops = 4.0 * local_rows * seq * double(st.out_width / k);
        nc.forward_flops += flops;
        nc.attention_flops += flops;
        return;
      }
      case StageKind::kElementwise: {
        const PartitionSpec ps = param_spec_or(key, AxisLists{act.back()});
        out_.specs[key] = ps;
        std::set<std::string> have(act.back().begin(), act.back().end());
        emit(id, false, id, CollectiveKind::kAllGather, Phase::kForward,
             bytes(param->shape.dims, AxisLists{intersect(ps.dims[0], have)}, param->shape.dtype),
             minus(ps.dims[0], have), key);
        gradient_sync(id, key, param->shape, ps.dims, lead_axes);
        return;
      }
      case StageKind::kOpaque: {
        const PartitionSpec ps = param_spec_or(key, AxisLists(param->shape.rank()));
        out_.specs[key] = ps;
        gradient_sync(id, key, param->shape, ps.dims, lead_axes);
        return;
      }
      case StageKind::kPool: {
        const auto seq_axes = act[1];
        act.erase(act.begin() + 1);
        dims.erase(dims.begin() + 1);
        emit(id, false, id, CollectiveKind::kAllReduce, Phase::kForward, bytes(dims, act, dt),
             seq_axes, id);
        return;
      }
    }
  }

  const ModelGraph& g_;
  const LogicalMesh& mesh_;
  SpecMap hard_;
  SpecMap hints_;
  ShardingAssignment out_;
};

}  // namespace detail

// Infers a PartitionSpec for every activation and parameter of `g` and the
// collectives the resulting SPMD program needs.
//
// `io_specs` pins tensors at the function boundary (parameters, edges leaving
// graph inputs, edges entering graph outputs); `constraints` pins interior
// activations. Both are hard. Rules applied node by node in topological order:
//   * elementwise stages and layer norms keep the incoming spec;
//   * a matmul output takes the activation's leading specs and the weight's
//     output-axis spec; a sharded contraction leaves partial sums, reduced by
//     an all_reduce over the contracting mesh axes;
//   * when several same-shaped inputs meet, the spec sharding more bytes wins
//     (earlier producer on ties) and the others are redistributed to it;
//   * unconstrained weights follow the activation's contraction spec, which
//     costs no extra communication.
// Greedy and local: collective bytes are minimized per node, not globally.
inline ShardingAssignment propagate(const ModelGraph& g, const LogicalMesh& mesh,
                                    const SpecMap& io_specs, const SpecMap& constraints = {}) {
  const auto shapes = tensor_shapes(g);
  std::set<std::string> boundary;
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& p : n.params) boundary.insert(param_key(id, p.name));
  }
  for (const auto& e : g.edges()) {
    if (g.in_edges(e.src).empty() || g.out_edges(e.dst).empty()) boundary.insert(e.key());
  }

  SpecMap hard;
  auto add = [&](const SpecMap& m, bool io) {
    for (const auto& [key, spec] : m) {
      auto it = shapes.find(key);
      if (it == shapes.end()) throw ValidationError(str("no tensor named '", key, "' in graph"));
      if (io && !boundary.count(key)) {
        throw ValidationError(str("io spec given for interior tensor '", key,
                                  "'; use a sharding constraint instead"));
      }
      spec.validate(mesh, it->second.rank());
      shard_shape(it->second, spec, mesh);
      PartitionSpec norm = spec.normalized(mesh);
      auto [pos, inserted] = hard.emplace(key, norm);
      if (!inserted && pos->second != norm) {
        throw ValidationError(str("conflicting sharding constraints on tensor '", key,
                                  "': ", pos->second.to_string(), " vs ", norm.to_string()));
      }
    }
  };
  add(io_specs, true);
  add(constraints, false);
  return detail::Propagator(g, mesh, std::move(hard)).run();
}

// Specs that pin every interior activation to its current assignment; feeding
// them back as constraints reproduces the assignment.
inline SpecMap interior_constraints(const ModelGraph& g, const ShardingAssignment& a) {
  SpecMap out;
  for (const auto& e : g.edges()) {
    if (!g.in_edges(e.src).empty() && !g.out_edges(e.dst).empty()) out[e.key()] = a.spec(e.key());
  }
  return out;
}

// Megatron-style placements for transformer graphs: QKV and MLP-in weights
// column-split over `model_axis`, attention-out and MLP-out weights row-split,
// vocabulary tables split along the vocabulary when it divides evenly, and
// graph inputs split along the batch over `data_axis`. Axes absent from the
// mesh are ignored.
inline SpecMap megatron_specs(const ModelGraph& g, const LogicalMesh& mesh,
                              const std::string& data_axis = "data",
                              const std::string& model_axis = "model") {
  SpecMap out;
  if (mesh.has_axis(model_axis)) {
    const auto m = mesh.axis_size(model_axis);
    const std::vector<std::string> ax{model_axis};
    for (const auto& [id, n] : g.nodes()) {
      for (std::size_t i = 0; i < n.params.size(); ++i) {
        const auto& p = n.params[i];
        const auto key = param_key(id, p.name);
        const auto& d = p.shape.dims;
        if (i == 0 && detail::has_lookup(n)) {
          if (d[0] % m == 0) out[key] = PartitionSpec{{ax, {}}};
        } else if (n.kind == NodeKind::kUnembedding && p.shape.rank() == 2) {
          if (d[1] % m == 0) out[key] = PartitionSpec{{{}, ax}};
        } else if (ends_with(p.name, "qkv") || ends_with(p.name, "mlp_in")) {
          if (d[1] % m == 0) out[key] = PartitionSpec{{{}, ax}};
        } else if (ends_with(p.name, "qkv_bias") || ends_with(p.name, "mlp_in_bias")) {
          if (d[0] % m == 0) out[key] = PartitionSpec{{ax}};
        } else if (ends_with(p.name, "out") || ends_with(p.name, "mlp_out")) {
          if (p.shape.rank() == 2 && d[0] % m == 0) out[key] = PartitionSpec{{ax, {}}};
        }
      }
    }
  }
  if (mesh.has_axis(data_axis)) {
    const auto dp = mesh.axis_size(data_axis);
    for (const auto& id : g.inputs()) {
      for (auto idx : g.out_edges(id)) {
        const Edge& e = g.edges()[idx];
        if (e.shape.rank() == 0 || e.shape.dims[0] % dp != 0) continue;
        auto spec = PartitionSpec::replicated(e.shape.rank());
        spec.dims[0] = {data_axis};
        out[e.key()] = spec;
      }
    }
  }
  return out;
}

}  // namespace distplan
