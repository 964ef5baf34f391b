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
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "distplan/analysis.hpp"
#include "distplan/config.hpp"
#include "distplan/graph_json.hpp"
#include "distplan/hw_cost.hpp"
#include "distplan/mesh.hpp"
#include "distplan/planner.hpp"
#include "distplan/propagation.hpp"
#include "distplan/simulator.hpp"
#include "distplan/timeline_export.hpp"

namespace distplan {

inline constexpr const char* kToolVersion = "0.1.0";

// Result of one subcommand: the JSON result, a plain-text rendering and, for
// simulations, the timeline behind it.
struct RunResult {
  Json result;
  std::string text;
  std::optional<Timeline> timeline;
};

// ----------------------------------------------------------------------------
// Inputs
// ----------------------------------------------------------------------------

inline bool is_profile_path(const std::string& s) {
  return ends_with(s, ".json") || s.find('/') != std::string::npos;
}

inline HardwareProfile resolve_profile(const ExperimentConfig& cfg,
                                       const std::optional<std::string>& override_name = std::nullopt) {
  const std::string name = override_name.value_or(cfg.profile);
  HardwareProfile p = is_profile_path(name) ? load_profile_file(name) : profile_by_name(name);
  return apply_profile_json(p, cfg.profile_overrides);
}

inline ModelGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(str("cannot open graph file '", path, "'"));
  try {
    return graph_from_json(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(str("graph file '", path, "': ", e.what()));
  }
}

inline ModelGraph build_graph(const ExperimentConfig& cfg) {
  if (cfg.graph_path) return load_graph_file(*cfg.graph_path);
  return build_moe(*cfg.model, cfg.experts, cfg.moe_every);
}

inline std::int64_t config_batch(const ExperimentConfig& cfg, const ModelGraph& g) {
  if (cfg.model) return cfg.model->batch;
  return graph_batch(g).value_or(1);
}

inline OptimizerSpec config_optimizer(const ExperimentConfig& cfg) {
  return cfg.optimizer == OptimizerKind::kAdam ? OptimizerSpec::adam() : OptimizerSpec::none();
}

inline DType graph_dtype(const ModelGraph& g) {
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& p : n.params) return p.shape.dtype;
  }
  return DType::kFloat32;
}

// Mesh for tensor-mode runs: explicit, or data x model with model = tp.
inline LogicalMesh config_mesh(const ExperimentConfig& cfg, const HardwareProfile& p) {
  if (!cfg.mesh.empty()) return LogicalMesh::create(cfg.mesh);
  const std::int64_t tp = cfg.tp.value_or(p.cores_per_slice);
  if (tp < 1 || p.cores_per_slice % tp != 0) {
    throw ValidationError(str("tp=", tp, " does not divide cores_per_slice=", p.cores_per_slice));
  }
  return combined_mesh(p.cores_per_slice / tp, tp);
}

// User specs on boundary tensors are io specs, the rest are constraints; no
// specs at all selects the column/row transformer layout.
inline ShardingAssignment config_assignment(const ExperimentConfig& cfg, const ModelGraph& g,
                                            const LogicalMesh& mesh) {
  if (cfg.specs.empty()) return propagate(g, mesh, megatron_specs(g, mesh));
  SpecMap io, constraints;
  for (const auto& [key, text] : cfg.specs) {
    PartitionSpec spec = parse_partition_spec(text);
    bool boundary = key.find("->") == std::string::npos;
    for (const auto& e : g.edges()) {
      if (e.key() == key) boundary = g.in_edges(e.src).empty() || g.out_edges(e.dst).empty();
    }
    (boundary ? io : constraints)[key] = spec;
  }
  return propagate(g, mesh, io, constraints);
}

inline StageAssignment config_stages(const ExperimentConfig& cfg, const ModelGraph& g,
                                     std::int64_t default_count) {
  if (!cfg.stage_nodes.empty()) {
    StageAssignment st;
    st.stages = cfg.stage_nodes;
    for (std::size_t s = 0; s < st.stages.size(); ++s) st.device_groups.push_back({std::int64_t(s)});
    st.validate(g);
    return st;
  }
  return auto_partition(g, cfg.stages.value_or(default_count));
}

// ----------------------------------------------------------------------------
// JSON pieces
// ----------------------------------------------------------------------------

inline Json to_json(const LogicalMesh& m) {
  Json j = Json::object();
  for (const auto& [axis, size] : m.axes()) j[axis] = size;
  return j;
}

inline Json to_json(const Collective& c) {
  Json j;
  j["site"] = c.site;
  j["node"] = c.node;
  j["kind"] = to_string(c.kind);
  j["phase"] = to_string(c.phase);
  j["tensor"] = c.tensor;
  j["axes"] = c.axes;
  j["group_size"] = c.group_size;
  j["payload_bytes"] = c.payload_bytes;
  return j;
}

inline Json to_json(const ShardingAssignment& a) {
  Json j;
  j["mesh"] = to_json(a.mesh);
  Json tensors = Json::array();
  for (const auto& [key, shape] : a.shapes) {
    tensors.push_back({{"tensor", key},
                       {"spec", a.spec(key).to_string()},
                       {"dims", shape.dims},
                       {"local_dims", a.local_shape(key).dims}});
  }
  j["tensors"] = std::move(tensors);
  Json cols = Json::array();
  for (const auto& c : a.collectives) cols.push_back(to_json(c));
  j["collectives"] = std::move(cols);
  Json counts = Json::object();
  for (auto phase : {Phase::kForward, Phase::kBackward, Phase::kGradient}) {
    for (auto kind : {CollectiveKind::kAllReduce, CollectiveKind::kAllGather,
                      CollectiveKind::kReduceScatter, CollectiveKind::kAllToAll}) {
      if (auto n = a.count(kind, phase)) counts[to_string(phase) + "." + to_string(kind)] = n;
    }
  }
  j["counts"] = std::move(counts);
  return j;
}

inline Json to_json(const CostEstimate& c) {
  return {{"compute_s", c.compute_s}, {"comm_s", c.comm_s}, {"total_s", c.total_s}, {"overlap", c.overlap}};
}

inline Json to_json(const StageAssignment& st) {
  Json j = Json::array();
  for (const auto& s : st.stages) j.push_back(s);
  return j;
}

// ----------------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------------

inline RunResult run_analyze(const ExperimentConfig& cfg) {
  const ModelGraph g = build_graph(cfg);
  const std::int64_t params = param_count(g);
  const std::int64_t embedding = embedding_param_count(g);
  std::int64_t block_params = 0;
  Json by_kind = Json::object();
  for (const auto& [id, n] : g.nodes()) {
    const auto c = param_count(n);
    if (n.has_attr("block")) block_params += c;
    const auto k = to_string(n.kind);
    by_kind[k] = by_kind.value(k, std::int64_t{0}) + c;
  }
  const DType dtype = graph_dtype(g);
  MemoryBreakdown mem = memory_bytes(params, dtype, config_optimizer(cfg), cfg.optimizer == OptimizerKind::kAdam);
  mem.activation_bytes = activation_bytes(g, cfg.remat);
  mem.total_bytes += mem.activation_bytes;
  const FlopCount f = flops_per_step(g);
  double tokens = 0;
  if (cfg.model) tokens = double(cfg.model->batch) * double(cfg.model->seq_len);

  RunResult r;
  Json& j = r.result;
  j["nodes"] = g.nodes().size();
  j["edges"] = g.edges().size();
  j["params"] = {{"total", params},
                 {"embedding", embedding},
                 {"non_embedding", params - embedding},
                 {"blocks", block_params},
                 {"by_kind", by_kind}};
  j["memory"] = {{"dtype", to_string(dtype)},
                 {"optimizer", to_string(cfg.optimizer)},
                 {"remat", to_string(cfg.remat)},
                 {"param_bytes", mem.param_bytes},
                 {"grad_bytes", mem.grad_bytes},
                 {"optimizer_bytes", mem.optimizer_bytes},
                 {"activation_bytes", mem.activation_bytes},
                 {"total_bytes", mem.total_bytes}};
  j["activations"] = {{"none", activation_bytes(g, Remat::kNone)},
                      {"per_block", activation_bytes(g, Remat::kPerBlock)}};
  j["flops"] = {{"forward", f.forward}, {"backward", f.backward}, {"step", f.step}, {"attention", f.attention}};
  if (tokens > 0) j["flops"]["six_n_tokens"] = 6.0 * double(params - embedding) * tokens;

  std::ostringstream os;
  os << "nodes " << g.nodes().size() << ", edges " << g.edges().size() << "\n"
     << "params " << params << " (embedding " << embedding << ", blocks " << block_params << ")\n"
     << "memory " << mem.total_bytes << " bytes (params " << mem.param_bytes << ", grads "
     << mem.grad_bytes << ", optimizer " << mem.optimizer_bytes << ", activations "
     << mem.activation_bytes << ")\n"
     << "flops/step " << f.step << " (attention " << f.attention << ")\n";
  r.text = os.str();
  return r;
}

inline RunResult run_shard(const ExperimentConfig& cfg, const HardwareProfile& p) {
  const ModelGraph g = build_graph(cfg);
  const LogicalMesh mesh = config_mesh(cfg, p);
  const ShardingAssignment a = config_assignment(cfg, g, mesh);
  SimOptions opts;
  opts.overlap = cfg.overlap;
  RunResult r;
  r.result = to_json(a);
  const CostEstimate cost = estimate_tensor_parallel(g, a, p, opts);
  r.result["cost"] = to_json(cost);
  std::ostringstream os;
  os << "mesh " << mesh.to_string() << "\n";
  for (const auto& [key, shape] : a.shapes) {
    os << "  " << key << " " << a.spec(key).to_string() << " " << shape.to_string() << " -> "
       << a.local_shape(key).to_string() << "\n";
  }
  os << "collectives " << a.collectives.size() << ", compute " << cost.compute_s << " s, comm "
     << cost.comm_s << " s\n";
  r.text = os.str();
  return r;
}

inline RunResult run_simulate(const ExperimentConfig& cfg, const HardwareProfile& p) {
  const ModelGraph g = build_graph(cfg);
  const std::int64_t batch = config_batch(cfg, g);
  SimOptions opts;
  opts.overlap = cfg.overlap;
  opts.micro_batches = cfg.micro_batches;
  RunResult r;
  Json& j = r.result;
  j["strategy"] = to_string(cfg.strategy);
  Timeline t;
  switch (cfg.strategy) {
    case Strategy::kPipeline: {
      const auto nodes = static_cast<std::int64_t>(g.nodes().size());
      const StageAssignment st = config_stages(cfg, g, std::min(p.cores_per_slice, nodes));
      if (std::int64_t(st.size()) > p.cores_per_slice) {
        throw ValidationError(str(st.size(), " pipeline stages need more than the ",
                                  p.cores_per_slice, " cores of ", p.name));
      }
      std::vector<std::int64_t> ms;
      if (cfg.micro_batches) {
        ms.push_back(*cfg.micro_batches);
      } else {
        for (std::int64_t m = 1; m <= batch; ++m) {
          if (batch % m == 0) ms.push_back(m);
        }
      }
      Json sweep = Json::array();
      std::int64_t best_m = 0;
      for (auto m : ms) {
        Timeline cand = simulate_pipeline(g, st, m, p, opts);
        sweep.push_back({{"micro_batches", m}, {"step_time", cand.step_time}});
        if (best_m == 0 || cand.step_time < t.step_time) {
          t = std::move(cand);
          best_m = m;
        }
      }
      const double stages = double(st.size());
      j["stages"] = to_json(st);
      j["micro_batches"] = best_m;
      j["sweep"] = std::move(sweep);
      j["balanced_bubble_fraction"] = (stages - 1) / (double(best_m) + stages - 1);
      break;
    }
    case Strategy::kTensor: {
      const LogicalMesh mesh = config_mesh(cfg, p);
      t = simulate_tensor_parallel(g, mesh, config_assignment(cfg, g, mesh), p, opts);
      j["mesh"] = to_json(mesh);
      break;
    }
    case Strategy::kCombined: {
      const std::int64_t tp = cfg.tp.value_or(1);
      std::optional<StageAssignment> st;
      if (cfg.stages || !cfg.stage_nodes.empty()) st = config_stages(cfg, g, 1);
      const std::int64_t count = st ? std::int64_t(st->size()) : 1;
      const std::int64_t dp = cfg.dp.value_or(p.cores_per_slice / std::max<std::int64_t>(1, tp * count));
      if (st) {
        // Each stage runs on its own tp group.
        for (std::size_t s = 0; s < st->size(); ++s) {
          st->device_groups[s].clear();
          for (std::int64_t k = 0; k < tp; ++k) st->device_groups[s].push_back(std::int64_t(s) * tp + k);
        }
      }
      t = simulate_combined(g, dp, tp, st, batch, p, opts);
      j["dp"] = dp;
      j["tp"] = tp;
      if (st) j["stages"] = to_json(*st);
      break;
    }
  }
  check_timeline(t);
  j["step_time"] = t.step_time;
  j["bubble_fraction"] = t.bubble_fraction();
  j["timeline"] = to_json(t);
  std::ostringstream os;
  os << to_string(cfg.strategy) << " step " << t.step_time << " s on " << t.device_count
     << " devices, bubble " << t.bubble_fraction() << "\n";
  r.text = os.str();
  r.timeline = std::move(t);
  return r;
}

inline Json to_json(const StrategyResult& s) {
  Json j;
  j["feasible"] = s.feasible;
  if (!s.feasible) {
    j["reason"] = s.reason;
    return j;
  }
  j["step_time"] = s.step_time;
  j["dp"] = s.dp;
  j["tp"] = s.tp;
  j["stages"] = s.stages;
  j["micro_batches"] = s.micro_batches;
  j["configurations"] = s.configurations;
  return j;
}

inline RunResult run_compare(const ExperimentConfig& cfg, const HardwareProfile& p) {
  const ModelGraph g = build_graph(cfg);
  const ComparisonReport rep = compare_parallelism(g, p, config_batch(cfg, g), cfg.micro_batch_sweep);
  RunResult r;
  r.result["params"] = param_count(g);
  r.result["pipeline"] = to_json(rep.pipeline);
  r.result["tensor"] = to_json(rep.tensor);
  r.result["winner"] = rep.winner;
  std::ostringstream os;
  auto line = [&](const char* name, const StrategyResult& s) {
    os << name << ": ";
    if (!s.feasible) {
      os << "infeasible (" << s.reason << ")\n";
    } else {
      os << s.step_time << " s (stages " << s.stages << ", dp " << s.dp << ", tp " << s.tp
         << ", micro-batches " << s.micro_batches << ")\n";
    }
  };
  line("pipeline", rep.pipeline);
  line("tensor", rep.tensor);
  os << "winner: " << rep.winner << "\n";
  r.text = os.str();
  return r;
}

inline RunResult run_capacity(const ExperimentConfig& cfg) {
  CapacityOptions o;
  o.optimizer = config_optimizer(cfg);
  o.remat = cfg.remat;
  o.layer_cap = cfg.capacity.layer_cap;
  auto slice_profile = [&](const std::string& slice) {
    return apply_profile_json(profile_by_name(slice), cfg.profile_overrides);
  };
  std::optional<double> hbm;
  RunResult r;
  Json& j = r.result;
  if (cfg.capacity.calibration) {
    const auto& cal = *cfg.capacity.calibration;
    hbm = calibrate_hbm(cal.hidden, cal.params, slice_profile(cal.slice), o);
    j["calibration"] = {{"slice", cal.slice}, {"hidden", cal.hidden}, {"params", cal.params},
                        {"hbm_bytes_per_core", *hbm}};
  }
  j["assumptions"] = {{"vocab", o.vocab},
                      {"seq_len", o.seq_len},
                      {"batch", o.batch},
                      {"optimizer", to_string(o.optimizer.kind)},
                      {"remat", to_string(o.remat)},
                      {"head_dim", kHeadDim},
                      {"layer_quantum", kLayerQuantum},
                      {"layer_cap", o.layer_cap}};
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %7s %6s %7s %14s %10s %14s %10s %9s\n", "slice", "hidden",
                "heads", "layers", "max_params", "step_s", "reported", "rep_step", "residual");
  os << buf;
  Json rows = Json::array();
  for (const auto& row : cfg.capacity.rows) {
    HardwareProfile p = slice_profile(row.slice);
    if (hbm) p.hbm_bytes_per_core = *hbm;
    const CapacityResult c = max_layers(row.hidden, p, o);
    Json jr;
    jr["slice"] = c.slice_name;
    jr["hidden"] = c.hidden;
    jr["heads"] = c.heads;
    jr["tp"] = c.tp;
    jr["max_layers"] = c.max_layers;
    jr["max_params"] = c.max_params;
    jr["per_core_bytes"] = c.per_core_bytes;
    jr["hbm_bytes_per_core"] = c.hbm_bytes_per_core;
    jr["witness_bytes"] = c.witness_bytes;
    jr["cap_reached"] = c.cap_reached;
    jr["predicted_step_time"] = c.predicted_step_time;
    std::string reported = "-", reported_step = "-", residual = "-";
    for (const auto& ref : reported_capacity()) {
      if (ref.slice == row.slice && ref.hidden == row.hidden) {
        const double res = double(c.max_params) / ref.params - 1.0;
        jr["reported_params"] = ref.params;
        jr["reported_step_time"] = ref.step_time_s;
        jr["residual"] = res;
        reported = str(ref.params / 1e9, "B");
        reported_step = str(ref.step_time_s);
        std::snprintf(buf, sizeof buf, "%+.1f%%", 100 * res);
        residual = buf;
      }
    }
    std::snprintf(buf, sizeof buf, "%-8s %7lld %6lld %7lld %13.2fB %10.3f %14s %10s %9s\n",
                  c.slice_name.c_str(), static_cast<long long>(c.hidden),
                  static_cast<long long>(c.heads), static_cast<long long>(c.max_layers),
                  double(c.max_params) / 1e9, c.predicted_step_time, reported.c_str(),
                  reported_step.c_str(), residual.c_str());
    os << buf;
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  r.text = os.str();
  return r;
}

inline RunResult run_checkpoint(const ExperimentConfig& cfg, const HardwareProfile& p) {
  if (!cfg.checkpoint) throw ValidationError("checkpoint subcommand needs a 'checkpoint' section");
  const auto& ck = *cfg.checkpoint;
  double step = 0;
  if (ck.step_time_s) {
    step = *ck.step_time_s;
  } else {
    step = run_simulate(cfg, p).result["step_time"].get<double>();
  }
  const CheckpointPlan plan = checkpoint_interval(step, ck.cost_s, ck.mtbf_s);
  RunResult r;
  r.result = {{"step_time_s", plan.step_time_s},
              {"checkpoint_cost_s", plan.checkpoint_cost_s},
              {"mtbf_s", plan.mtbf_s},
              {"optimal_interval_s", plan.optimal_interval_s},
              {"interval_steps", plan.interval_steps},
              {"interval_s", plan.interval_s},
              {"expected_overhead_fraction", plan.expected_overhead_fraction},
              {"warnings", plan.warnings}};
  std::ostringstream os;
  os << "checkpoint every " << plan.interval_steps << " steps (" << plan.interval_s
     << " s), expected overhead " << 100 * plan.expected_overhead_fraction << "%\n";
  for (const auto& w : plan.warnings) os << "warning: " << w << "\n";
  r.text = os.str();
  return r;
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"analyze", "shard", "simulate",
                                              "compare", "capacity", "checkpoint"};
  return names;
}

inline RunResult run(const std::string& subcommand, const ExperimentConfig& cfg,
                     const std::optional<std::string>& profile_override = std::nullopt) {
  if (subcommand == "analyze") return run_analyze(cfg);
  if (subcommand == "capacity") return run_capacity(cfg);
  const HardwareProfile p = resolve_profile(cfg, profile_override);
  if (subcommand == "shard") return run_shard(cfg, p);
  if (subcommand == "simulate") return run_simulate(cfg, p);
  if (subcommand == "compare") return run_compare(cfg, p);
  if (subcommand == "checkpoint") return run_checkpoint(cfg, p);
  throw ValidationError(str("unknown subcommand '", subcommand, "'"));
}

inline Json make_report(const ExperimentConfig& cfg, const HardwareProfile* profile,
                        std::int64_t seed, const Json& result) {
  Json doc;
  doc["tool_version"] = kToolVersion;
  Json echo;
  echo["config"] = to_json(cfg);
  echo["defaults_applied"] = cfg.defaults_applied;
  if (profile) echo["profile"] = to_json(*profile);
  echo["seed"] = seed;
  doc["config_echo"] = std::move(echo);
  doc["result"] = result;
  return doc;
}

}  // namespace distplan
