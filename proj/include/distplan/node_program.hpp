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

#include <cstdint>
#include <string>
#include <vector>

#include "distplan/model_ir.hpp"

namespace distplan {

// How a node transforms the activation it receives. Every node is lowered to
// a short sequence of stages derived from its kind and param inventory:
//
//   * lookup     first 2-D param of embedding/encoder/ema_target nodes
//   * gate       2-D param of a moe_router; the activation passes through
//   * attention  inserted before a 2-D param whose input width is a third of
//                the current width, on nodes carrying a `heads` attr
//   * matmul     any other 2-D param (in, out) applied to the last axis
//   * elementwise  1-D param matching the current width
//   * opaque     any other param; no compute, never sharded implicitly
//   * pool       nodes with attr pool=1 reduce the sequence axis at the end
enum class StageKind { kLookup, kMatmul, kGate, kAttention, kElementwise, kOpaque, kPool };

struct Stage {
  StageKind kind;
  int param = -1;                     // index into NodeSpec::params
  std::vector<std::int64_t> leading;  // activation dims before the last axis
  std::int64_t in_width = 0;          // 0 for lookups (token ids)
  std::int64_t out_width = 0;
};

struct NodeProgram {
  bool has_activation = false;
  std::vector<std::int64_t> input_dims;
  std::vector<std::int64_t> output_dims;
  std::vector<Stage> stages;
};

namespace detail {

inline std::int64_t product(const std::vector<std::int64_t>& dims) {
  std::int64_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

inline bool has_lookup(const NodeSpec& n) {
  return (n.kind == NodeKind::kEmbedding || n.kind == NodeKind::kEncoder ||
          n.kind == NodeKind::kEmaTarget) &&
         !n.params.empty() && n.params[0].shape.rank() == 2;
}

}  // namespace detail

inline NodeProgram node_program(const ModelGraph& g, const std::string& id) {
  const NodeSpec& n = g.node(id);
  const auto& ins = g.in_edges(id);
  const auto& outs = g.out_edges(id);
  const bool pool = n.attr("pool") == 1.0;
  const bool lookup = detail::has_lookup(n);

  NodeProgram prog;
  std::vector<std::int64_t> leading;
  std::int64_t width = 0;
  if (!ins.empty()) {
    const auto& dims = g.edges()[ins.front()].shape.dims;
    if (dims.empty()) {
      throw ValidationError(str("node '", id, "' receives a rank-0 activation"));
    }
    leading.assign(dims.begin(), dims.end() - 1);
    width = dims.back();
    if (lookup) {
      leading = dims;
      width = 0;
    }
  } else if (!outs.empty()) {
    const auto& dims = g.edges()[outs.front()].shape.dims;
    if (dims.empty()) {
      throw ValidationError(str("node '", id, "' emits a rank-0 activation"));
    }
    leading.assign(dims.begin(), dims.end() - 1);
    if (pool) {
      leading.insert(leading.begin() + std::min<std::size_t>(1, leading.size()),
                     static_cast<std::int64_t>(n.attr("seq", 1.0)));
    }
    width = dims.back();
    if (lookup) {
      width = 0;
    } else {
      for (const auto& p : n.params) {
        if (p.shape.rank() == 2) {
          width = p.shape.dims[0];
          break;
        }
      }
    }
  } else {
    for (int i = 0; i < int(n.params.size()); ++i) {
      prog.stages.push_back({StageKind::kOpaque, i, {}, 0, 0});
    }
    return prog;
  }

  prog.has_activation = true;
  prog.input_dims = leading;
  if (width) prog.input_dims.push_back(width);
  const bool attention_capable = n.has_attr("heads");

  for (int i = 0; i < int(n.params.size()); ++i) {
    const TensorShape& s = n.params[i].shape;
    if (i == 0 && lookup) {
      prog.stages.push_back({StageKind::kLookup, i, leading, 0, s.dims[1]});
      width = s.dims[1];
      continue;
    }
    if (s.rank() == 2 && n.kind == NodeKind::kMoeRouter) {
      if (width != s.dims[0]) {
        throw ValidationError(str("node '", id, "' gate '", n.params[i].name,
                                  "' expects width ", s.dims[0], " but activation has ",
                                  width));
      }
      prog.stages.push_back({StageKind::kGate, i, leading, width, width});
      continue;
    }
    if (s.rank() == 2) {
      if (attention_capable && width == 3 * s.dims[0]) {
        prog.stages.push_back({StageKind::kAttention, -1, leading, width, s.dims[0]});
        width = s.dims[0];
      }
      if (width != s.dims[0]) {
        throw ValidationError(str("node '", id, "' param '", n.params[i].name,
                                  "' expects input width ", s.dims[0],
                                  " but activation has ", width));
      }
      prog.stages.push_back({StageKind::kMatmul, i, leading, width, s.dims[1]});
      width = s.dims[1];
      continue;
    }
    if (s.rank() == 1 && s.dims[0] == width) {
      prog.stages.push_back({StageKind::kElementwise, i, leading, width, width});
      continue;
    }
    prog.stages.push_back({StageKind::kOpaque, i, leading, width, width});
  }
  if (pool && leading.size() >= 2) {
    prog.stages.push_back({StageKind::kPool, -1, leading, width, width});
    leading.erase(leading.begin() + 1);
  }
  prog.output_dims = leading;
  prog.output_dims.push_back(width);

  for (auto idx : outs) {
    const auto& e = g.edges()[idx];
    if (e.shape.dims != prog.output_dims) {
      throw ValidationError(str("node '", id, "' produces (", join(prog.output_dims, ","),
                                ") but edge ", e.key(), " carries ", e.shape.to_string()));
    }
  }
  return prog;
}

// Forward FLOPs of one stage on the given (possibly shard-local) extents.
inline double stage_forward_flops(const Stage& st, const NodeSpec& n) {
  const double rows = double(detail::product(st.leading));
  switch (st.kind) {
    case StageKind::kMatmul:
    case StageKind::kGate: {
      const auto& d = n.params[st.param].shape.dims;
      return 2.0 * rows * double(d[0]) * double(d[1]);
    }
    case StageKind::kAttention: {
      // QK^T and attention-weighted V, each 2 * b * s^2 * h.
      const double seq = st.leading.empty() ? 1.0 : double(st.leading.back());
      return 4.0 * rows * seq * double(st.out_width);
    }
    default:
      return 0.0;
  }
}

}  // namespace distplan
