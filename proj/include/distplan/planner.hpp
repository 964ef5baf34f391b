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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "distplan/analysis.hpp"
#include "distplan/hw_cost.hpp"
#include "distplan/model_ir.hpp"
#include "distplan/propagation.hpp"
#include "distplan/simulator.hpp"

namespace distplan {

// ----------------------------------------------------------------------------
// Capacity search
// ----------------------------------------------------------------------------

inline constexpr std::int64_t kLayerQuantum = 10;
inline constexpr std::int64_t kLayerSearchCap = 1000;
inline constexpr std::int64_t kHeadDim = 128;

struct CapacityOptions {
  std::int64_t seq_len = 2048;
  std::int64_t batch = 1;
  OptimizerSpec optimizer = OptimizerSpec::adam();
  DType dtype = DType::kFloat32;
  std::int64_t vocab = kDefaultVocab;
  Remat remat = Remat::kPerBlock;
  std::optional<std::int64_t> heads;  // derived from hidden when unset
  std::optional<std::int64_t> tp;     // cores_per_slice when unset
  std::int64_t layer_cap = kLayerSearchCap;
};

// hidden/128 heads when tp divides that count; otherwise the smallest
// multiple of tp that is at least hidden/128 and divides hidden.
inline std::int64_t default_heads(std::int64_t hidden, std::int64_t tp) {
  if (hidden < 1 || tp < 1) throw ValidationError("hidden and tp must be >= 1");
  const std::int64_t base = std::max<std::int64_t>(1, hidden / kHeadDim);
  if (base % tp == 0 && hidden % base == 0) return base;
  for (std::int64_t h = ((base + tp - 1) / tp) * tp; h <= hidden; h += tp) {
    if (hidden % h == 0) return h;
  }
  throw ValidationError(str("no head count for hidden=", hidden, " is divisible by tp=", tp));
}

inline TransformerConfig capacity_config(std::int64_t hidden, std::int64_t layers,
                                         const HardwareProfile& p, const CapacityOptions& o) {
  const std::int64_t tp = o.tp.value_or(p.cores_per_slice);
  TransformerConfig c;
  c.hidden = hidden;
  c.layers = layers;
  c.heads = o.heads.value_or(default_heads(hidden, tp));
  c.vocab = o.vocab;
  c.seq_len = o.seq_len;
  c.batch = o.batch;
  c.dtype = o.dtype;
  c.validate();
  validate_tensor_parallel(c, tp);
  return c;
}

// Params, gradients and optimizer state shard over tp with the weights, as do
// the stashed activations.
inline double per_core_memory(const ModelGraph& g, std::int64_t tp, const CapacityOptions& o) {
  const auto state = memory_bytes(param_count(g), o.dtype, o.optimizer, true).total_bytes;
  return double(state) / double(tp) + double(activation_bytes(g, o.remat)) / double(tp);
}

inline double per_core_memory(std::int64_t hidden, std::int64_t layers, const HardwareProfile& p,
                              const CapacityOptions& o) {
  return per_core_memory(build_decoder_only(capacity_config(hidden, layers, p, o)),
                         o.tp.value_or(p.cores_per_slice), o);
}

struct CapacityResult {
  std::string slice_name;
  std::int64_t hidden = 0;
  std::int64_t heads = 0;
  std::int64_t tp = 0;
  std::int64_t max_layers = 0;
  std::int64_t max_params = 0;
  double per_core_bytes = 0;
  double hbm_bytes_per_core = 0;
  // Memory at max_layers + 10; exceeds hbm unless the search cap was hit.
  double witness_bytes = 0;
  bool cap_reached = false;
  double predicted_step_time = 0;
  CapacityOptions assumptions;
  HardwareProfile profile;
};

// Step time of one tensor-parallel step over all tp devices, communication
// included.
inline double tensor_parallel_step_time(const ModelGraph& g, std::int64_t tp,
                                        const HardwareProfile& p) {
  const LogicalMesh mesh = combined_mesh(1, tp);
  const ShardingAssignment a = propagate(g, mesh, megatron_specs(g, mesh));
  return estimate_tensor_parallel(g, a, p).total_s + p.coordination_overhead_s;
}

inline CapacityResult max_layers(std::int64_t hidden, const HardwareProfile& p,
                                 const CapacityOptions& o = {}) {
  p.validate();
  const std::int64_t tp = o.tp.value_or(p.cores_per_slice);
  CapacityResult r;
  r.slice_name = p.name;
  r.hidden = hidden;
  r.tp = tp;
  r.heads = capacity_config(hidden, kLayerQuantum, p, o).heads;
  r.hbm_bytes_per_core = p.hbm_bytes_per_core;
  r.assumptions = o;
  r.profile = p;
  std::int64_t best = 0;
  double best_bytes = 0;
  for (std::int64_t L = kLayerQuantum; L <= o.layer_cap; L += kLayerQuantum) {
    const double bytes = per_core_memory(hidden, L, p, o);
    if (bytes > p.hbm_bytes_per_core) {
      r.witness_bytes = bytes;
      break;
    }
    best = L;
    best_bytes = bytes;
  }
  if (best == 0) {
    throw InfeasibleError(str("model does not fit: hidden=", hidden, " with ", kLayerQuantum,
                              " layers needs ", r.witness_bytes, " bytes per core on ", p.name,
                              ", hbm is ", p.hbm_bytes_per_core));
  }
  r.max_layers = best;
  r.per_core_bytes = best_bytes;
  if (best + kLayerQuantum > o.layer_cap) {
    r.cap_reached = true;
    r.witness_bytes = per_core_memory(hidden, best + kLayerQuantum, p, o);
  }
  const ModelGraph g = build_decoder_only(capacity_config(hidden, best, p, o));
  r.max_params = param_count(g);
  r.predicted_step_time = tensor_parallel_step_time(g, tp, p);
  return r;
}

// Per-core hbm at which a decoder of exactly `target_params` parameters at
// `hidden` fits, with layers treated as a continuous quantity.
inline double calibrate_hbm(std::int64_t hidden, double target_params, const HardwareProfile& p,
                            const CapacityOptions& o = {}) {
  const std::int64_t tp = o.tp.value_or(p.cores_per_slice);
  const ModelGraph g0 = build_decoder_only(capacity_config(hidden, 0, p, o));
  const ModelGraph g1 = build_decoder_only(capacity_config(hidden, 1, p, o));
  const double params0 = double(param_count(g0));
  const double per_layer = double(param_count(g1)) - params0;
  const double layers = (target_params - params0) / per_layer;
  if (layers <= 0) {
    throw ValidationError(str("target ", target_params, " params is below the layer-free size ", params0));
  }
  const double m0 = per_core_memory(g0, tp, o);
  const double m1 = per_core_memory(g1, tp, o);
  return m0 + layers * (m1 - m0);
}

struct ReportedCapacity {
  std::string slice;
  std::int64_t hidden;
  double params;
  double step_time_s;
};

// Published measurements the capacity table is printed against.
inline const std::vector<ReportedCapacity>& reported_capacity() {
  static const std::vector<ReportedCapacity> rows{
      {"v4-16", 5120, 13.7e9, 0.87},
      {"v4-128", 10240, 86.6e9, 1.52},
      {"v4-512", 16384, 340.0e9, 6.21},
  };
  return rows;
}

// ----------------------------------------------------------------------------
// Pipeline versus tensor parallelism
// ----------------------------------------------------------------------------

struct StrategyResult {
  bool feasible = false;
  std::string reason;  // why no configuration was feasible
  double step_time = 0;
  std::int64_t dp = 0;
  std::int64_t tp = 0;
  std::int64_t stages = 0;
  std::int64_t micro_batches = 0;
  std::int64_t configurations = 0;  // feasible configurations simulated
};

struct ComparisonReport {
  StrategyResult pipeline;
  StrategyResult tensor;
  std::string winner;  // "pipeline", "tensor", "tie" or "none"
};

inline constexpr double kTieTolerance = 1e-9;

namespace detail {

inline std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> out;
  for (std::int64_t d = 1; d <= n; ++d) {
    if (n % d == 0) out.push_back(d);
  }
  return out;
}

inline void consider(StrategyResult& best, double t, std::int64_t dp, std::int64_t tp,
                     std::int64_t stages, std::int64_t m) {
  ++best.configurations;
  if (!best.feasible || t < best.step_time) {
    best.feasible = true;
    best.step_time = t;
    best.dp = dp;
    best.tp = tp;
    best.stages = stages;
    best.micro_batches = m;
  }
}

}  // namespace detail

// Best GPipe configuration (stage count and micro-batch count, the latter
// from `micro_batch_sweep` or every divisor of the batch) against the best
// data x model mesh factorization of the slice.
inline ComparisonReport compare_parallelism(const ModelGraph& g, const HardwareProfile& p,
                                            std::int64_t batch,
                                            const std::vector<std::int64_t>& micro_batch_sweep = {}) {
  p.validate();
  if (batch < 1) throw ValidationError(str("batch must be >= 1, got ", batch));
  const std::int64_t cores = p.cores_per_slice;
  const auto nodes = static_cast<std::int64_t>(g.nodes().size());
  ComparisonReport r;

  std::vector<std::int64_t> ms;
  for (auto m : micro_batch_sweep.empty() ? detail::divisors(batch) : micro_batch_sweep) {
    if (m >= 1 && batch % m == 0) ms.push_back(m);
  }

  // Pure GPipe: one replica over `s` stages, one core per stage.
  const std::int64_t min_stages = cores == 1 ? 1 : 2;
  for (std::int64_t s = min_stages; s <= std::min(cores, nodes); ++s) {
    const StageAssignment st = auto_partition(g, s);
    for (auto m : ms) {
      detail::consider(r.pipeline, simulate_pipeline(g, st, m, p).step_time, 1, 1, s, m);
    }
  }
  if (!r.pipeline.feasible) r.pipeline.reason = "no stage count and micro-batch count fit the slice and batch";

  std::string last_error;
  for (auto tp : detail::divisors(cores)) {
    const std::int64_t dp = cores / tp;
    if (batch % dp != 0) continue;
    try {
      detail::consider(r.tensor, simulate_combined(g, dp, tp, std::nullopt, batch, p).step_time, dp, tp, 1, 1);
    } catch (const ValidationError& e) {
      last_error = e.what();
    }
  }
  if (!r.tensor.feasible) {
    r.tensor.reason = last_error.empty() ? "no tensor-parallel degree divides the batch and slice" : last_error;
  }

  if (!r.pipeline.feasible && !r.tensor.feasible) {
    r.winner = "none";
  } else if (!r.pipeline.feasible) {
    r.winner = "tensor";
  } else if (!r.tensor.feasible) {
    r.winner = "pipeline";
  } else {
    const double a = r.pipeline.step_time, b = r.tensor.step_time;
    if (std::abs(a - b) <= kTieTolerance * std::max(a, b)) {
      r.winner = "tie";
    } else {
      r.winner = a < b ? "pipeline" : "tensor";
    }
  }
  return r;
}

// ----------------------------------------------------------------------------
// Checkpoint interval
// ----------------------------------------------------------------------------

struct CheckpointPlan {
  double interval_s = 0;          // whole number of steps
  std::int64_t interval_steps = 0;
  double optimal_interval_s = 0;  // before rounding to steps
  double step_time_s = 0;
  double checkpoint_cost_s = 0;
  double mtbf_s = 0;
  double expected_overhead_fraction = 0;
  std::vector<std::string> warnings;
};

// Time lost per unit of wall time: checkpoint writes plus, on average, half an
// interval of recomputation per failure.
inline double checkpoint_overhead(double interval_s, double cost_s, double mtbf_s) {
  return cost_s / interval_s + interval_s / (2.0 * mtbf_s);
}

inline CheckpointPlan checkpoint_interval(double step_time_s, double cost_s, double mtbf_s) {
  if (!(step_time_s > 0)) throw ValidationError(str("step_time_s must be > 0, got ", step_time_s));
  if (!(mtbf_s > 0)) throw ValidationError(str("mtbf_s must be > 0, got ", mtbf_s));
  if (!(cost_s >= 0)) throw ValidationError(str("checkpoint_cost_s must be >= 0, got ", cost_s));
  CheckpointPlan plan;
  plan.step_time_s = step_time_s;
  plan.checkpoint_cost_s = cost_s;
  plan.mtbf_s = mtbf_s;
  if (cost_s == 0) {
    plan.warnings.push_back("checkpoint cost is zero; the optimal interval degenerates to 0");
    return plan;
  }
  plan.optimal_interval_s = std::sqrt(2.0 * cost_s * mtbf_s);
  // The overhead is convex in the interval, so the best whole step count is
  // one of the two neighbours of the continuous optimum.
  const double steps = plan.optimal_interval_s / step_time_s;
  const auto lo = std::max<std::int64_t>(1, std::int64_t(std::floor(steps)));
  const auto hi = std::max<std::int64_t>(1, std::int64_t(std::ceil(steps)));
  plan.interval_steps =
      checkpoint_overhead(double(hi) * step_time_s, cost_s, mtbf_s) <
              checkpoint_overhead(double(lo) * step_time_s, cost_s, mtbf_s)
          ? hi
          : lo;
  plan.interval_s = double(plan.interval_steps) * step_time_s;
  plan.expected_overhead_fraction = checkpoint_overhead(plan.interval_s, cost_s, mtbf_s);
  if (cost_s >= mtbf_s) {
    plan.warnings.push_back(str("checkpoint cost ", cost_s, " s is not below the mtbf ", mtbf_s,
                                " s; the interval approximation does not hold"));
  }
  if (plan.expected_overhead_fraction >= 1) {
    plan.warnings.push_back("expected overhead exceeds the whole run time");
  }
  return plan;
}

}  // namespace distplan
