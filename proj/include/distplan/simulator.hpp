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
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "distplan/analysis.hpp"
#include "distplan/hw_cost.hpp"
#include "distplan/mesh.hpp"
#include "distplan/model_ir.hpp"
#include "distplan/propagation.hpp"

namespace distplan {

enum class EventKind { kForward, kBackward, kCollective, kSendRecv, kIdle };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::kForward: return "forward";
    case EventKind::kBackward: return "backward";
    case EventKind::kCollective: return "collective";
    case EventKind::kSendRecv: return "send_recv";
    case EventKind::kIdle: return "idle";
  }
  return "idle";
}

struct TimelineEvent {
  std::int64_t device = 0;
  double start = 0;
  double end = 0;
  EventKind kind = EventKind::kIdle;
  std::string label;
  std::optional<std::int64_t> micro_batch;
  std::optional<std::int64_t> payload_bytes;  // collectives and sends

  double duration() const { return end - start; }

  friend bool operator==(const TimelineEvent&, const TimelineEvent&) = default;
};

struct Timeline {
  std::int64_t device_count = 0;
  std::vector<TimelineEvent> events;  // sorted by (device, start)
  double step_time = 0;
  std::vector<double> per_device_utilization;

  std::vector<TimelineEvent> events_on(std::int64_t device) const {
    std::vector<TimelineEvent> out;
    for (const auto& e : events) {
      if (e.device == device) out.push_back(e);
    }
    return out;
  }

  // Idle share of the device-time rectangle.
  double bubble_fraction() const {
    if (per_device_utilization.empty()) return 0.0;
    double sum = 0;
    for (double u : per_device_utilization) sum += u;
    return 1.0 - sum / double(per_device_utilization.size());
  }

  double busy_time(std::int64_t device, EventKind kind) const {
    double t = 0;
    for (const auto& e : events) {
      if (e.device == device && e.kind == kind) t += e.duration();
    }
    return t;
  }

  friend bool operator==(const Timeline&, const Timeline&) = default;
};

// Events well-formed, non-overlapping per device, step time equal to the last
// event end and utilizations within [0, 1].
inline void check_timeline(const Timeline& t) {
  constexpr double kSlack = 1e-12;
  std::vector<double> cursor(t.device_count, 0.0);
  double last = 0;
  for (const auto& e : t.events) {
    if (e.device < 0 || e.device >= t.device_count) {
      throw InvariantError(str("event '", e.label, "' on unknown device ", e.device));
    }
    if (!(e.end >= e.start)) throw InvariantError(str("event '", e.label, "' ends before it starts"));
    if (e.start < cursor[e.device] - kSlack * std::max(1.0, t.step_time)) {
      throw InvariantError(str("event '", e.label, "' overlaps its predecessor on device ", e.device));
    }
    cursor[e.device] = e.end;
    last = std::max(last, e.end);
  }
  if (std::abs(last - t.step_time) > kSlack * std::max(1.0, t.step_time)) {
    throw InvariantError(str("step time ", t.step_time, " differs from last event end ", last));
  }
  for (double u : t.per_device_utilization) {
    if (!(u >= 0 && u <= 1)) throw InvariantError(str("utilization ", u, " outside [0, 1]"));
  }
}

struct SimOptions {
  bool overlap = false;        // collectives hidden behind compute when true
  bool gradient_sync = true;   // per-node gradient collectives in tensor mode
  // Micro-batch count for pipelined combined runs; unset sweeps the divisors
  // of the per-replica batch and keeps the fastest.
  std::optional<std::int64_t> micro_batches;
};

namespace detail {

// Sorts events, appends the host coordination overhead, fills gaps with idle
// events and computes utilization.
inline Timeline finalize(std::int64_t devices, std::vector<TimelineEvent> busy,
                         double coordination_overhead_s) {
  Timeline t;
  t.device_count = devices;
  std::vector<double> last(devices, 0.0);
  for (const auto& e : busy) last[e.device] = std::max(last[e.device], e.end);
  double step = 0;
  for (double v : last) step = std::max(step, v);
  if (coordination_overhead_s > 0) {
    for (std::int64_t d = 0; d < devices; ++d) {
      busy.push_back({d, step, step + coordination_overhead_s, EventKind::kIdle,
                      "host_coordination", std::nullopt, std::nullopt});
    }
    step += coordination_overhead_s;
  }
  std::stable_sort(busy.begin(), busy.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
    return std::tie(a.device, a.start) < std::tie(b.device, b.start);
  });
  std::vector<double> work(devices, 0.0);
  std::vector<double> cursor(devices, 0.0);
  for (auto& e : busy) {
    if (e.start > cursor[e.device]) {
      t.events.push_back({e.device, cursor[e.device], e.start, EventKind::kIdle, "idle",
                          std::nullopt, std::nullopt});
    }
    if (e.kind != EventKind::kIdle) work[e.device] += e.duration();
    cursor[e.device] = std::max(cursor[e.device], e.end);
    t.events.push_back(std::move(e));
  }
  for (std::int64_t d = 0; d < devices; ++d) {
    if (cursor[d] < step) {
      t.events.push_back({d, cursor[d], step, EventKind::kIdle, "idle", std::nullopt, std::nullopt});
    }
  }
  std::stable_sort(t.events.begin(), t.events.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
    return std::tie(a.device, a.start) < std::tie(b.device, b.start);
  });
  t.step_time = step;
  for (std::int64_t d = 0; d < devices; ++d) {
    t.per_device_utilization.push_back(step > 0 ? std::min(1.0, work[d] / step) : 1.0);
  }
  return t;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Stage assignment
// ----------------------------------------------------------------------------

struct StageAssignment {
  std::vector<std::vector<std::string>> stages;
  std::vector<std::vector<std::int64_t>> device_groups;  // stage -> devices

  std::size_t size() const { return stages.size(); }

  std::size_t devices_per_stage() const {
    return device_groups.empty() ? 1 : device_groups.front().size();
  }

  void validate(const ModelGraph& g) const {
    if (stages.empty()) throw ValidationError("stage assignment has no stages");
    if (!device_groups.empty() && device_groups.size() != stages.size()) {
      throw ValidationError(str("stage assignment has ", stages.size(), " stages but ",
                                device_groups.size(), " device groups"));
    }
    std::map<std::string, std::size_t> stage_of;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (stages[s].empty()) throw ValidationError(str("stage ", s, " is empty"));
      for (const auto& id : stages[s]) {
        if (!g.has_node(id)) throw ValidationError(str("stage ", s, " names unknown node '", id, "'"));
        if (!stage_of.emplace(id, s).second) {
          throw ValidationError(str("node '", id, "' is assigned to more than one stage"));
        }
      }
    }
    for (const auto& [id, n] : g.nodes()) {
      if (!stage_of.count(id)) throw ValidationError(str("node '", id, "' is not assigned to a stage"));
    }
    for (const auto& e : g.edges()) {
      if (stage_of[e.src] > stage_of[e.dst]) {
        throw ValidationError(str("edge ", e.key(), " runs from stage ", stage_of[e.src],
                                  " back to stage ", stage_of[e.dst]));
      }
    }
    std::set<std::int64_t> used;
    for (const auto& group : device_groups) {
      if (group.size() != devices_per_stage() || group.empty()) {
        throw ValidationError("device groups must be non-empty and equally sized");
      }
      for (auto d : group) {
        if (!used.insert(d).second) throw ValidationError(str("device ", d, " serves two stages"));
      }
    }
  }
};

// Splits the topological order into `p` contiguous stages minimizing the
// largest stage's forward FLOPs: binary search over candidate bounds with
// greedy packing, then splitting until exactly `p` stages exist.
inline StageAssignment auto_partition(const ModelGraph& g, std::int64_t p) {
  const auto& order = g.topological_order();
  const auto n = static_cast<std::int64_t>(order.size());
  if (p < 1 || p > n) {
    throw ValidationError(str("cannot split ", n, " nodes into ", p, " non-empty stages"));
  }
  std::vector<double> w;
  for (const auto& id : order) w.push_back(node_forward_flops(g, id));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::int64_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + w[i];

  auto pack = [&](double cap) {
    std::vector<std::int64_t> cuts{0};
    double load = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (i > cuts.back() && load + w[i] > cap) {
        cuts.push_back(i);
        load = 0;
      }
      load += w[i];
    }
    cuts.push_back(n);
    return cuts;
  };
  std::vector<double> candidates;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j <= n; ++j) candidates.push_back(prefix[j] - prefix[i]);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const double heaviest = *std::max_element(w.begin(), w.end());
  auto lo = std::lower_bound(candidates.begin(), candidates.end(), heaviest) - candidates.begin();
  auto hi = static_cast<std::int64_t>(candidates.size()) - 1;
  while (lo < hi) {
    auto mid = (lo + hi) / 2;
    if (static_cast<std::int64_t>(pack(candidates[mid]).size()) - 1 <= p) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  std::vector<std::int64_t> cuts = pack(candidates[lo]);
  while (static_cast<std::int64_t>(cuts.size()) - 1 < p) {
    for (std::size_t s = cuts.size() - 1; s-- > 0;) {
      if (cuts[s + 1] - cuts[s] >= 2) {
        cuts.insert(cuts.begin() + s + 1, cuts[s + 1] - 1);
        break;
      }
    }
  }
  StageAssignment a;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    a.stages.emplace_back(order.begin() + cuts[s], order.begin() + cuts[s + 1]);
    a.device_groups.push_back({static_cast<std::int64_t>(s)});
  }
  return a;
}

// ----------------------------------------------------------------------------
// GPipe engine
// ----------------------------------------------------------------------------

namespace detail {

// Per-micro-batch costs of one pipeline stage.
struct StageCost {
  double fwd_compute = 0;
  double fwd_comm = 0;
  double bwd_compute = 0;
  double bwd_comm = 0;
  std::vector<std::int64_t> devices;
};

// GPipe: all micro-batches run forward through every stage, then backward in
// reverse stage order (last micro-batch first). Sends block the sender.
inline std::vector<TimelineEvent> run_gpipe(const std::vector<StageCost>& stages,
                                            const std::vector<double>& send_s,
                                            const std::vector<std::int64_t>& send_bytes,
                                            std::int64_t m, bool overlap) {
  const auto p = static_cast<std::int64_t>(stages.size());
  std::vector<TimelineEvent> ev;
  std::vector<double> clock(p, 0.0);
  std::vector<double> arrive(p, 0.0);
  const bool tp_labels = stages.front().devices.size() > 1;

  auto block = [&](std::int64_t s, std::int64_t k, double start, bool forward) {
    const StageCost& c = stages[s];
    const double compute = forward ? c.fwd_compute : c.bwd_compute;
    const double comm = forward ? c.fwd_comm : c.bwd_comm;
    const double exposed = overlap ? std::max(0.0, comm - compute) : comm;
    for (std::size_t j = 0; j < c.devices.size(); ++j) {
      const std::string label = tp_labels ? str(forward ? "F_{" : "B_{", s, ",", j, "}")
                                          : str(forward ? "F_{" : "B_{", s, "}");
      if (compute > 0) {
        ev.push_back({c.devices[j], start, start + compute,
                      forward ? EventKind::kForward : EventKind::kBackward, label, k, std::nullopt});
      }
      if (exposed > 0) {
        ev.push_back({c.devices[j], start + compute, start + compute + exposed,
                      EventKind::kCollective, str("collectives ", label), k, std::nullopt});
      }
    }
    return start + compute + exposed;
  };
  auto send = [&](std::int64_t s, std::int64_t to, std::int64_t k, double start, std::size_t link) {
    const double d = send_s[link];
    if (d <= 0) return start;
    for (auto dev : stages[s].devices) {
      ev.push_back({dev, start, start + d, EventKind::kSendRecv, str("send ", s, "->", to), k,
                    send_bytes[link]});
    }
    return start + d;
  };

  std::vector<std::vector<double>> ready(p, std::vector<double>(m, 0.0));
  for (std::int64_t k = 0; k < m; ++k) {
    for (std::int64_t s = 0; s < p; ++s) {
      double t = block(s, k, std::max(clock[s], ready[s][k]), true);
      if (s + 1 < p) {
        t = send(s, s + 1, k, t, s);
        ready[s + 1][k] = t;
      }
      clock[s] = t;
    }
  }
  for (auto& r : ready) std::fill(r.begin(), r.end(), 0.0);
  for (std::int64_t k = m - 1; k >= 0; --k) {
    for (std::int64_t s = p - 1; s >= 0; --s) {
      double t = block(s, k, std::max(clock[s], ready[s][k]), false);
      if (s > 0) {
        t = send(s, s - 1, k, t, s - 1);
        ready[s - 1][k] = t;
      }
      clock[s] = t;
    }
  }
  return ev;
}

// Bytes crossing the boundary after each stage.
inline std::vector<std::int64_t> boundary_bytes(const ModelGraph& g, const StageAssignment& st,
                                                const ShardingAssignment* a) {
  std::map<std::string, std::size_t> stage_of;
  for (std::size_t s = 0; s < st.size(); ++s) {
    for (const auto& id : st.stages[s]) stage_of[id] = s;
  }
  std::vector<std::int64_t> out(st.size() > 0 ? st.size() - 1 : 0, 0);
  for (const auto& e : g.edges()) {
    const auto from = stage_of[e.src];
    const auto to = stage_of[e.dst];
    if (from == to) continue;
    const auto b = a ? a->local_shape(e.key()).byte_size() : e.shape.byte_size();
    // Activations headed further down travel through each intermediate link.
    for (auto s = from; s < to; ++s) out[s] += b;
  }
  return out;
}

inline void check_micro_batches(const ModelGraph& g, std::int64_t m, std::int64_t replicas) {
  if (m < 1) throw ValidationError(str("micro_batches must be >= 1, got ", m));
  if (auto b = graph_batch(g)) {
    if (*b % replicas != 0 || (*b / replicas) % m != 0) {
      throw ValidationError(str("batch ", *b / replicas, " is not divisible by ", m, " micro-batches"));
    }
  }
}

}  // namespace detail

// GPipe schedule of `g` split into `stages`, one device per stage unless the
// assignment names device groups. Stage times come from unsharded FLOPs.
inline Timeline simulate_pipeline(const ModelGraph& g, const StageAssignment& stages,
                                  std::int64_t micro_batches, const HardwareProfile& p,
                                  const SimOptions& opts = {}) {
  stages.validate(g);
  p.validate();
  detail::check_micro_batches(g, micro_batches, 1);
  const double m = double(micro_batches);
  std::vector<detail::StageCost> costs;
  std::int64_t devices = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    detail::StageCost c;
    double flops = 0;
    for (const auto& id : stages.stages[s]) flops += node_forward_flops(g, id);
    c.fwd_compute = matmul_time(flops / m, p);
    c.bwd_compute = matmul_time(2.0 * flops / m, p);
    c.devices = stages.device_groups.empty() ? std::vector<std::int64_t>{std::int64_t(s)}
                                             : stages.device_groups[s];
    for (auto d : c.devices) devices = std::max(devices, d + 1);
    costs.push_back(std::move(c));
  }
  const auto bytes = detail::boundary_bytes(g, stages, nullptr);
  std::vector<double> send_s;
  std::vector<std::int64_t> send_b;
  for (auto b : bytes) {
    send_b.push_back(b / micro_batches);
    send_s.push_back(double(b) / m / p.link_bandwidth);
  }
  return detail::finalize(devices,
                          detail::run_gpipe(costs, send_s, send_b, micro_batches, opts.overlap),
                          p.coordination_overhead_s);
}

// ----------------------------------------------------------------------------
// Tensor (SPMD) parallelism
// ----------------------------------------------------------------------------

namespace detail {

struct Segment {
  EventKind kind;
  std::string label;
  double seconds;
  std::optional<std::int64_t> payload;
  std::string site;
  std::string cost_kind;
};

inline void check_total(const ModelGraph& g, const ShardingAssignment& a) {
  for (const auto& [key, shape] : tensor_shapes(g)) {
    if (!a.specs.count(key)) {
      throw ValidationError(str("sharding assignment does not cover tensor '", key, "'"));
    }
  }
  for (const auto& [id, n] : g.nodes()) {
    if (!a.compute.count(id)) {
      throw ValidationError(str("sharding assignment has no compute entry for node '", id, "'"));
    }
  }
}

inline std::string collective_label(const Collective& c) {
  return str(to_string(c.kind), "(", join(c.axes, "+"), ") ", c.tensor, " ", c.payload_bytes, "B");
}

// The per-device program of one SPMD step, identical on every device.
inline std::vector<Segment> spmd_segments(const ModelGraph& g, const ShardingAssignment& a,
                                          const HardwareProfile& p, const SimOptions& opts) {
  check_total(g, a);
  std::vector<Segment> out;
  const auto& order = g.topological_order();
  auto comm_segments = [&](const std::string& id, Phase phase, double compute,
                           const std::string& compute_label) {
    std::vector<Segment> segs;
    double total = 0;
    for (const Collective* c : a.at_node(id, phase)) {
      const double t = collective_time(c->kind, double(c->payload_bytes), c->group_size, p);
      total += t;
      segs.push_back({EventKind::kCollective, collective_label(*c), t, c->payload_bytes,
                      c->site, to_string(c->kind)});
    }
    if (!opts.overlap) {
      out.insert(out.end(), segs.begin(), segs.end());
    } else if (total > compute) {
      out.push_back({EventKind::kCollective, str("exposed collectives ", compute_label),
                     total - compute, std::nullopt, id, "exposed"});
    }
  };
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = order[i];
    const double t = matmul_time(a.compute.at(id).forward_flops, p);
    const std::string label = str("F_{", i, "}");
    if (t > 0) out.push_back({EventKind::kForward, label, t, std::nullopt, id, "compute"});
    comm_segments(id, Phase::kForward, t, label);
  }
  for (std::size_t i = order.size(); i-- > 0;) {
    const auto& id = order[i];
    const double t = matmul_time(2.0 * a.compute.at(id).forward_flops, p);
    const std::string label = str("B_{", i, "}");
    if (t > 0) out.push_back({EventKind::kBackward, label, t, std::nullopt, id, "compute"});
    comm_segments(id, Phase::kBackward, t, label);
    if (opts.gradient_sync) comm_segments(id, Phase::kGradient, 0.0, label);
  }
  return out;
}

inline std::vector<TimelineEvent> replicate(const std::vector<Segment>& segs,
                                            std::int64_t devices) {
  std::vector<TimelineEvent> ev;
  ev.reserve(segs.size() * devices);
  for (std::int64_t d = 0; d < devices; ++d) {
    double t = 0;
    for (const auto& s : segs) {
      std::string label = s.label;
      if (s.kind == EventKind::kForward || s.kind == EventKind::kBackward) {
        label.insert(label.size() - 1, str(",", d));
      }
      ev.push_back({d, t, t + s.seconds, s.kind, std::move(label), std::nullopt, s.payload});
      t += s.seconds;
    }
  }
  return ev;
}

}  // namespace detail

// Per-device compute and communication of one tensor-parallel step.
inline CostEstimate estimate_tensor_parallel(const ModelGraph& g, const ShardingAssignment& a,
                                             const HardwareProfile& p, const SimOptions& opts = {}) {
  SimOptions full = opts;
  full.overlap = false;
  CostEstimate c;
  c.overlap = opts.overlap;
  for (const auto& s : detail::spmd_segments(g, a, p, full)) {
    (s.kind == EventKind::kCollective ? c.comm_s : c.compute_s) += s.seconds;
    c.breakdown.push_back({s.site, s.cost_kind, s.seconds});
  }
  if (!opts.overlap) {
    c.total_s = c.compute_s + c.comm_s;
  } else {
    double total = 0;
    for (const auto& s : detail::spmd_segments(g, a, p, opts)) total += s.seconds;
    c.total_s = total;
  }
  return c;
}

// Every device runs every node on its shard, forward in topological order and
// backward in reverse, with the assignment's collectives after each node.
inline Timeline simulate_tensor_parallel(const ModelGraph& g, const LogicalMesh& mesh,
                                         const ShardingAssignment& assignment,
                                         const HardwareProfile& p, const SimOptions& opts = {}) {
  p.validate();
  if (!(assignment.mesh == mesh)) {
    throw ValidationError(str("assignment was made for ", assignment.mesh.to_string(),
                              ", not ", mesh.to_string()));
  }
  const auto segs = detail::spmd_segments(g, assignment, p, opts);
  return detail::finalize(mesh.device_count(), detail::replicate(segs, mesh.device_count()),
                          p.coordination_overhead_s);
}

// ----------------------------------------------------------------------------
// Combined data + tensor (+ pipeline) parallelism
// ----------------------------------------------------------------------------

inline LogicalMesh combined_mesh(std::int64_t dp, std::int64_t tp) {
  return LogicalMesh::create({{"data", dp}, {"model", tp}});
}

// `dp` replicas of a `tp`-way tensor-parallel program (optionally pipelined
// over `pp_stages`, each stage on its own tp group). Every replica ends its
// step with one gradient all-reduce over the data axis carrying its share of
// the parameter bytes.
inline Timeline simulate_combined(const ModelGraph& g, std::int64_t dp, std::int64_t tp,
                                  const std::optional<StageAssignment>& pp_stages,
                                  std::int64_t batch, const HardwareProfile& p,
                                  const SimOptions& opts = {}) {
  p.validate();
  const std::int64_t stage_count = pp_stages ? std::int64_t(pp_stages->size()) : 1;
  if (dp < 1 || tp < 1 || dp * tp * stage_count != p.cores_per_slice) {
    throw ValidationError(str("dp=", dp, " x tp=", tp, " x stages=", stage_count,
                              " does not match cores_per_slice=", p.cores_per_slice));
  }
  if (batch < 1 || batch % dp != 0) {
    throw ValidationError(str("batch ", batch, " is not divisible by dp=", dp));
  }
  if (auto b = graph_batch(g); b && *b != batch) {
    throw ValidationError(str("batch ", batch, " does not match the graph's batch ", *b));
  }
  const LogicalMesh mesh = combined_mesh(dp, tp);
  const ShardingAssignment a = propagate(g, mesh, megatron_specs(g, mesh));
  SimOptions inner = opts;
  inner.gradient_sync = false;

  if (!pp_stages) {
    auto segs = detail::spmd_segments(g, a, p, inner);
    if (dp > 1) {
      const std::int64_t payload = param_bytes(g) / tp;
      segs.push_back({EventKind::kCollective, str("grad all_reduce(data) ", payload, "B"),
                      allreduce_time(double(payload), dp, p), payload, "gradients", "all_reduce"});
    }
    return detail::finalize(dp * tp, detail::replicate(segs, dp * tp), p.coordination_overhead_s);
  }

  const StageAssignment& st = *pp_stages;
  st.validate(g);
  const std::int64_t per_replica = batch / dp;
  std::vector<std::int64_t> candidates;
  if (opts.micro_batches) {
    candidates.push_back(*opts.micro_batches);
  } else {
    for (std::int64_t m = 1; m <= per_replica; ++m) {
      if (per_replica % m == 0) candidates.push_back(m);
    }
  }
  std::optional<Timeline> best;
  for (auto m : candidates) {
    detail::check_micro_batches(g, m, dp);
    std::vector<TimelineEvent> all;
    std::vector<std::int64_t> stage_param_bytes(st.size(), 0);
    for (std::int64_t r = 0; r < dp; ++r) {
      std::vector<detail::StageCost> costs;
      for (std::size_t s = 0; s < st.size(); ++s) {
        detail::StageCost c;
        for (const auto& id : st.stages[s]) {
          const double f = a.compute.at(id).forward_flops / double(m);
          c.fwd_compute += matmul_time(f, p);
          c.bwd_compute += matmul_time(2.0 * f, p);
          for (const Collective* col : a.at_node(id, Phase::kForward)) {
            c.fwd_comm += collective_time(col->kind, double(col->payload_bytes) / double(m), col->group_size, p);
          }
          for (const Collective* col : a.at_node(id, Phase::kBackward)) {
            c.bwd_comm += collective_time(col->kind, double(col->payload_bytes) / double(m), col->group_size, p);
          }
          if (r == 0) {
            for (const auto& prm : g.node(id).params) stage_param_bytes[s] += prm.shape.byte_size();
          }
        }
        for (std::int64_t j = 0; j < tp; ++j) {
          c.devices.push_back((r * stage_count + std::int64_t(s)) * tp + j);
        }
        costs.push_back(std::move(c));
      }
      const auto bytes = detail::boundary_bytes(g, st, &a);
      std::vector<double> send_s;
      std::vector<std::int64_t> send_b;
      for (auto b : bytes) {
        send_b.push_back(b / m);
        send_s.push_back(double(b) / double(m) / p.link_bandwidth);
      }
      auto ev = detail::run_gpipe(costs, send_s, send_b, m, opts.overlap);
      if (dp > 1) {
        for (std::size_t s = 0; s < st.size(); ++s) {
          const std::int64_t payload = stage_param_bytes[s] / tp;
          const double t = allreduce_time(double(payload), dp, p);
          for (auto dev : costs[s].devices) {
            double end = 0;
            for (const auto& e : ev) {
              if (e.device == dev) end = std::max(end, e.end);
            }
            ev.push_back({dev, end, end + t, EventKind::kCollective,
                          str("grad all_reduce(data) ", payload, "B"), std::nullopt, payload});
          }
        }
      }
      all.insert(all.end(), ev.begin(), ev.end());
    }
    Timeline t = detail::finalize(dp * stage_count * tp, std::move(all), p.coordination_overhead_s);
    if (!best || t.step_time < best->step_time) best = std::move(t);
  }
  return *best;
}

}  // namespace distplan
