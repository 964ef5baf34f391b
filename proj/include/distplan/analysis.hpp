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
#include <string>

#include "distplan/model_ir.hpp"
#include "distplan/node_program.hpp"

namespace distplan {

// ----------------------------------------------------------------------------
// Parameter counts
// ----------------------------------------------------------------------------

inline std::int64_t param_count(const NodeSpec& n) {
  std::int64_t total = 0;
  for (const auto& p : n.params) total += p.shape.num_elements();
  return total;
}

inline std::int64_t param_count(const ModelGraph& g) {
  std::int64_t total = 0;
  for (const auto& [id, n] : g.nodes()) total += param_count(n);
  return total;
}

// Parameters held in lookup tables (token embeddings), which cost no FLOPs.
inline std::int64_t embedding_param_count(const ModelGraph& g) {
  std::int64_t total = 0;
  for (const auto& [id, n] : g.nodes()) {
    if (detail::has_lookup(n)) total += n.params[0].shape.num_elements();
  }
  return total;
}

inline std::int64_t param_bytes(const ModelGraph& g) {
  std::int64_t total = 0;
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& p : n.params) total += p.shape.byte_size();
  }
  return total;
}

// ----------------------------------------------------------------------------
// Memory
// ----------------------------------------------------------------------------

enum class OptimizerKind { kNone, kAdam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kNone;
  int state_slots = 0;
  DType state_dtype = DType::kFloat32;

  static OptimizerSpec none() { return {}; }
  // Adam keeps first and second moments; float32 unless overridden.
  static OptimizerSpec adam(DType state_dtype = DType::kFloat32) {
    return {OptimizerKind::kAdam, 2, state_dtype};
  }

  void validate() const {
    if ((state_slots == 0) != (kind == OptimizerKind::kNone)) {
      throw ValidationError(
          str("optimizer state_slots=", state_slots, " inconsistent with kind"));
    }
  }
};

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "none";
}

struct MemoryBreakdown {
  std::int64_t param_bytes = 0;
  std::int64_t grad_bytes = 0;
  std::int64_t optimizer_bytes = 0;
  std::int64_t activation_bytes = 0;
  std::int64_t total_bytes = 0;

  friend bool operator==(const MemoryBreakdown&, const MemoryBreakdown&) = default;
};

inline MemoryBreakdown memory_bytes(std::int64_t params, DType dtype,
                                    const OptimizerSpec& opt, bool grads) {
  if (params < 0) throw ValidationError(str("params must be >= 0, got ", params));
  opt.validate();
  MemoryBreakdown m;
  m.param_bytes = params * byte_width(dtype);
  m.grad_bytes = grads ? params * byte_width(dtype) : 0;
  m.optimizer_bytes = params * opt.state_slots * byte_width(opt.state_dtype);
  m.total_bytes = m.param_bytes + m.grad_bytes + m.optimizer_bytes + m.activation_bytes;
  return m;
}

enum class Remat { kNone, kPerBlock };

inline std::string to_string(Remat r) { return r == Remat::kNone ? "none" : "per_block"; }

inline Remat parse_remat(const std::string& s) {
  if (s == "none") return Remat::kNone;
  if (s == "per_block") return Remat::kPerBlock;
  throw ValidationError(str("unknown remat mode '", s, "'"));
}

// Stashed activation bytes for one step. Nodes sharing a `block` attr form a
// block; with per-block rematerialization only edges crossing block
// boundaries stay resident, plus the largest single block's interior edges.
inline std::int64_t activation_bytes(const ModelGraph& g, Remat remat) {
  std::int64_t all = 0;
  std::int64_t boundary = 0;
  std::map<double, std::int64_t> interior;
  for (const auto& e : g.edges()) {
    const std::int64_t bytes = e.shape.byte_size();
    all += bytes;
    const NodeSpec& src = g.node(e.src);
    const NodeSpec& dst = g.node(e.dst);
    if (src.has_attr("block") && dst.has_attr("block") &&
        src.attr("block") == dst.attr("block")) {
      interior[src.attr("block")] += bytes;
    } else {
      boundary += bytes;
    }
  }
  if (remat == Remat::kNone) return all;
  std::int64_t largest = 0;
  for (const auto& [block, bytes] : interior) largest = std::max(largest, bytes);
  return boundary + largest;
}

// ----------------------------------------------------------------------------
// FLOPs
// ----------------------------------------------------------------------------

struct FlopCount {
  double forward = 0;
  double backward = 0;
  double step = 0;
  // Attention score and weighted-sum FLOPs included in `step`.
  double attention = 0;
};

inline double node_forward_flops(const ModelGraph& g, const std::string& id) {
  const NodeSpec& n = g.node(id);
  double flops = 0;
  for (const auto& st : node_program(g, id).stages) flops += stage_forward_flops(st, n);
  return flops;
}

// Backward costs twice the forward pass.
inline FlopCount flops_per_step(const ModelGraph& g) {
  FlopCount f;
  double attention_fwd = 0;
  for (const auto& id : g.topological_order()) {
    const NodeSpec& n = g.node(id);
    for (const auto& st : node_program(g, id).stages) {
      const double x = stage_forward_flops(st, n);
      f.forward += x;
      if (st.kind == StageKind::kAttention) attention_fwd += x;
    }
  }
  f.backward = 2.0 * f.forward;
  f.step = f.forward + f.backward;
  f.attention = 3.0 * attention_fwd;
  return f;
}

}  // namespace distplan
