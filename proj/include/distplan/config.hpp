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
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "distplan/analysis.hpp"
#include "distplan/graph_json.hpp"
#include "distplan/hw_cost.hpp"
#include "distplan/mesh.hpp"
#include "distplan/model_ir.hpp"
#include "distplan/planner.hpp"

namespace distplan {

enum class Strategy { kPipeline, kTensor, kCombined };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kPipeline: return "pipeline";
    case Strategy::kTensor: return "tensor";
    case Strategy::kCombined: return "combined";
  }
  return "tensor";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "pipeline") return Strategy::kPipeline;
  if (s == "tensor") return Strategy::kTensor;
  if (s == "combined") return Strategy::kCombined;
  throw ValidationError(str("unknown strategy '", s, "' (expected pipeline, tensor or combined)"));
}

struct CapacityRow {
  std::string slice;
  std::int64_t hidden = 0;

  friend bool operator==(const CapacityRow&, const CapacityRow&) = default;
};

struct CapacityCalibration {
  std::string slice;
  std::int64_t hidden = 0;
  double params = 0;

  friend bool operator==(const CapacityCalibration&, const CapacityCalibration&) = default;
};

struct CapacitySection {
  std::vector<CapacityRow> rows;
  std::optional<CapacityCalibration> calibration;  // none keeps the profile's hbm
  std::int64_t layer_cap = kLayerSearchCap;

  friend bool operator==(const CapacitySection&, const CapacitySection&) = default;
};

struct CheckpointSection {
  std::optional<double> step_time_s;  // simulated when unset
  double cost_s = 0;
  double mtbf_s = 0;

  friend bool operator==(const CheckpointSection&, const CheckpointSection&) = default;
};

struct OutputSection {
  std::optional<std::string> path;  // report directory
  std::vector<std::string> formats;

  friend bool operator==(const OutputSection&, const OutputSection&) = default;
};

struct ExperimentConfig {
  // Exactly one model source.
  std::optional<TransformerConfig> model;
  std::int64_t experts = 1;
  std::int64_t moe_every = 2;
  std::optional<std::string> graph_path;

  std::vector<std::pair<std::string, std::int64_t>> mesh;
  std::string profile = "v4";
  Json profile_overrides = Json::object();

  Strategy strategy = Strategy::kTensor;
  std::optional<std::int64_t> micro_batches;         // pipeline; sweep when unset
  std::optional<std::int64_t> stages;                // stage count, auto-partitioned
  std::vector<std::vector<std::string>> stage_nodes; // explicit stages
  std::optional<std::int64_t> dp;
  std::optional<std::int64_t> tp;
  std::map<std::string, std::string> specs;          // tensor key -> "P(...)"
  bool overlap = false;

  Remat remat = Remat::kPerBlock;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  std::vector<std::int64_t> micro_batch_sweep;  // compare; divisors of batch when empty
  CapacitySection capacity;
  std::optional<CheckpointSection> checkpoint;
  OutputSection output;

  // Defaults filled in by the parser, as "field=value".
  std::vector<std::string> defaults_applied;

  // Round-tripping compares the configuration, not how it was written.
  bool operator==(const ExperimentConfig& o) const {
    return model == o.model && experts == o.experts && moe_every == o.moe_every &&
           graph_path == o.graph_path && mesh == o.mesh && profile == o.profile &&
           profile_overrides == o.profile_overrides && strategy == o.strategy &&
           micro_batches == o.micro_batches && stages == o.stages && stage_nodes == o.stage_nodes &&
           dp == o.dp && tp == o.tp && specs == o.specs && overlap == o.overlap && remat == o.remat &&
           optimizer == o.optimizer && micro_batch_sweep == o.micro_batch_sweep &&
           capacity == o.capacity && checkpoint == o.checkpoint && output == o.output;
  }
};

namespace detail {

// 1-based line of the first occurrence of `"key"` in `text`, 0 if absent.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

class ConfigReader {
 public:
  explicit ConfigReader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto line = key.empty() ? 0 : line_of_key(text_, key);
    throw ValidationError(line ? str("config line ", line, ": ", msg) : str("config: ", msg));
  }

  void keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) const {
    if (!obj.is_object()) fail("", str(where, " must be an object"));
    for (const auto& [key, value] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(key, str("unknown key '", key, "' in ", where));
    }
  }

  template <typename T>
  T get(const Json& obj, const char* key, const std::string& where) const {
    const Json& v = obj.at(key);
    bool ok = true;
    if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer() || (v.is_number_float() && v.get<double>() == double(v.get<std::int64_t>()));
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    }
    if (!ok) fail(key, str("key '", key, "' in ", where, " has the wrong type"));
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(key, str("key '", key, "' in ", where, " has the wrong type"));
    }
  }

  template <typename T>
  std::optional<T> opt(const Json& obj, const char* key, const std::string& where) const {
    if (!obj.contains(key)) return std::nullopt;
    return get<T>(obj, key, where);
  }

  template <typename T>
  T need(const Json& obj, const char* key, const std::string& where) const {
    if (!obj.contains(key)) fail("", str("missing key '", key, "' in ", where));
    return get<T>(obj, key, where);
  }

 private:
  const std::string& text_;
};

}  // namespace detail

// Strict parse: unknown keys, wrong types and inconsistent strategy
// parameters are errors carrying the offending line where possible.
inline ExperimentConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ValidationError(str("config line ", line, " column ", col, ": malformed JSON"));
  }
  detail::ConfigReader r(text);
  r.keys(doc, {"model", "graph", "mesh", "profile", "profile_overrides", "strategy",
               "micro_batches", "stages", "dp", "tp", "specs", "overlap", "remat", "optimizer",
               "micro_batch_sweep", "capacity", "checkpoint", "output"},
         "config");
  ExperimentConfig c;
  auto record = [&](const std::string& s) { c.defaults_applied.push_back(s); };

  if (doc.contains("model") == doc.contains("graph")) {
    r.fail(doc.contains("model") ? "graph" : "", "exactly one of 'model' and 'graph' must be given");
  }
  if (doc.contains("model")) {
    const Json& m = doc["model"];
    r.keys(m, {"hidden", "layers", "heads", "ffn_hidden", "vocab", "seq_len", "batch", "dtype",
               "include_biases", "experts", "moe_every"},
           "model");
    TransformerConfig t;
    t.hidden = r.need<std::int64_t>(m, "hidden", "model");
    t.layers = r.need<std::int64_t>(m, "layers", "model");
    t.heads = r.need<std::int64_t>(m, "heads", "model");
    t.ffn_hidden = r.opt<std::int64_t>(m, "ffn_hidden", "model");
    if (!t.ffn_hidden) {
      t.ffn_hidden = 4 * t.hidden;
      record(str("model.ffn_hidden=", *t.ffn_hidden));
    }
    t.vocab = r.opt<std::int64_t>(m, "vocab", "model");
    if (!t.vocab) {
      t.vocab = kDefaultVocab;
      record(str("model.vocab=", kDefaultVocab));
    }
    if (auto v = r.opt<std::int64_t>(m, "seq_len", "model")) {
      t.seq_len = *v;
    } else {
      record(str("model.seq_len=", t.seq_len));
    }
    if (auto v = r.opt<std::int64_t>(m, "batch", "model")) {
      t.batch = *v;
    } else {
      record(str("model.batch=", t.batch));
    }
    if (auto v = r.opt<std::string>(m, "dtype", "model")) {
      try {
        t.dtype = parse_dtype(*v);
      } catch (const ValidationError& e) {
        r.fail("dtype", e.what());
      }
    } else {
      record("model.dtype=float32");
    }
    if (auto v = r.opt<bool>(m, "include_biases", "model")) t.include_biases = *v;
    try {
      t.validate();
    } catch (const ValidationError& e) {
      r.fail("model", e.what());
    }
    c.model = t;
    if (auto v = r.opt<std::int64_t>(m, "experts", "model")) c.experts = *v;
    if (auto v = r.opt<std::int64_t>(m, "moe_every", "model")) c.moe_every = *v;
    if (c.experts < 1 || c.moe_every < 1) r.fail("experts", "experts and moe_every must be >= 1");
  } else {
    c.graph_path = r.get<std::string>(doc, "graph", "config");
  }

  if (doc.contains("mesh")) {
    const Json& m = doc["mesh"];
    if (!m.is_object() || m.empty()) r.fail("mesh", "mesh must be a non-empty object of axis sizes");
    for (const auto& [axis, size] : m.items()) {
      c.mesh.emplace_back(axis, r.get<std::int64_t>(m, axis.c_str(), "mesh"));
    }
    try {
      LogicalMesh::create(c.mesh);
    } catch (const ValidationError& e) {
      r.fail("mesh", e.what());
    }
  }

  if (auto v = r.opt<std::string>(doc, "profile", "config")) {
    c.profile = *v;
  } else {
    record("profile=v4");
  }
  if (doc.contains("profile_overrides")) {
    c.profile_overrides = doc["profile_overrides"];
    r.keys(c.profile_overrides, {"name", "peak_flops_per_core", "cores_per_slice", "hbm_bytes_per_core",
                                 "link_bandwidth", "link_latency", "mfu", "coordination_overhead_s"},
           "profile_overrides");
  }
  if (!c.profile_overrides.contains("mfu")) record(str("profile.mfu=", kDefaultMfu));

  if (auto v = r.opt<std::string>(doc, "strategy", "config")) {
    try {
      c.strategy = parse_strategy(*v);
    } catch (const ValidationError& e) {
      r.fail("strategy", e.what());
    }
  } else {
    record("strategy=tensor");
  }
  c.micro_batches = r.opt<std::int64_t>(doc, "micro_batches", "config");
  if (doc.contains("stages")) {
    const Json& s = doc["stages"];
    if (s.is_array()) {
      for (const auto& stage : s) {
        if (!stage.is_array()) r.fail("stages", "stages must be a count or a list of node-id lists");
        std::vector<std::string> ids;
        for (const auto& id : stage) {
          if (!id.is_string()) r.fail("stages", "stage entries must be node ids");
          ids.push_back(id.get<std::string>());
        }
        c.stage_nodes.push_back(std::move(ids));
      }
    } else {
      c.stages = r.get<std::int64_t>(doc, "stages", "config");
      if (*c.stages < 1) r.fail("stages", "stages must be >= 1");
    }
  }
  c.dp = r.opt<std::int64_t>(doc, "dp", "config");
  c.tp = r.opt<std::int64_t>(doc, "tp", "config");
  if (doc.contains("specs")) {
    const Json& s = doc["specs"];
    if (!s.is_object()) r.fail("specs", "specs must map tensor keys to partition specs");
    for (const auto& [key, value] : s.items()) {
      const auto text = r.get<std::string>(s, key.c_str(), "specs");
      try {
        parse_partition_spec(text);
      } catch (const ValidationError& e) {
        r.fail(key, str("spec for '", key, "': ", e.what()));
      }
      c.specs[key] = text;
    }
  }
  if (auto v = r.opt<bool>(doc, "overlap", "config")) c.overlap = *v;
  if (auto v = r.opt<std::string>(doc, "remat", "config")) {
    try {
      c.remat = parse_remat(*v);
    } catch (const ValidationError& e) {
      r.fail("remat", e.what());
    }
  } else {
    record("remat=per_block");
  }
  if (auto v = r.opt<std::string>(doc, "optimizer", "config")) {
    if (*v == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else if (*v == "none") {
      c.optimizer = OptimizerKind::kNone;
    } else {
      r.fail("optimizer", str("unknown optimizer '", *v, "' (expected adam or none)"));
    }
  } else {
    record("optimizer=adam");
  }
  if (doc.contains("micro_batch_sweep")) {
    for (const auto& m : doc["micro_batch_sweep"]) {
      if (!m.is_number_integer() || m.get<std::int64_t>() < 1) {
        r.fail("micro_batch_sweep", "micro_batch_sweep entries must be positive integers");
      }
      c.micro_batch_sweep.push_back(m.get<std::int64_t>());
    }
  }

  if (doc.contains("capacity")) {
    const Json& cap = doc["capacity"];
    r.keys(cap, {"rows", "calibration", "layer_cap"}, "capacity");
    if (cap.contains("rows")) {
      for (const auto& row : cap["rows"]) {
        r.keys(row, {"slice", "hidden"}, "capacity row");
        c.capacity.rows.push_back({r.need<std::string>(row, "slice", "capacity row"),
                                   r.need<std::int64_t>(row, "hidden", "capacity row")});
      }
    }
    if (cap.contains("calibration") && !cap["calibration"].is_null()) {
      const Json& cal = cap["calibration"];
      r.keys(cal, {"slice", "hidden", "params"}, "capacity calibration");
      c.capacity.calibration = CapacityCalibration{
          r.need<std::string>(cal, "slice", "capacity calibration"),
          r.need<std::int64_t>(cal, "hidden", "capacity calibration"),
          r.need<double>(cal, "params", "capacity calibration")};
    }
    if (auto v = r.opt<std::int64_t>(cap, "layer_cap", "capacity")) c.capacity.layer_cap = *v;
  }
  if (c.capacity.rows.empty()) {
    for (const auto& row : reported_capacity()) c.capacity.rows.push_back({row.slice, row.hidden});
    record("capacity.rows=reported");
    if (!doc.contains("capacity") || !doc["capacity"].contains("calibration")) {
      const auto& first = reported_capacity().front();
      c.capacity.calibration = CapacityCalibration{first.slice, first.hidden, first.params};
      record("capacity.calibration=first reported row");
    }
  }

  if (doc.contains("checkpoint")) {
    const Json& ck = doc["checkpoint"];
    r.keys(ck, {"step_time_s", "cost_s", "mtbf_s"}, "checkpoint");
    CheckpointSection s;
    s.step_time_s = r.opt<double>(ck, "step_time_s", "checkpoint");
    if (!s.step_time_s) record("checkpoint.step_time_s=simulated");
    s.cost_s = r.need<double>(ck, "cost_s", "checkpoint");
    s.mtbf_s = r.need<double>(ck, "mtbf_s", "checkpoint");
    c.checkpoint = s;
  }

  if (doc.contains("output")) {
    const Json& o = doc["output"];
    r.keys(o, {"path", "formats"}, "output");
    c.output.path = r.opt<std::string>(o, "path", "output");
    if (o.contains("formats")) {
      for (const auto& f : o["formats"]) {
        if (!f.is_string() || (f != "json" && f != "text" && f != "svg")) {
          r.fail("formats", "output formats must be json, text or svg");
        }
        c.output.formats.push_back(f.get<std::string>());
      }
    }
  }

  // Strategy parameters must match the strategy.
  const bool has_stages = c.stages || !c.stage_nodes.empty();
  if (c.stages && !c.stage_nodes.empty()) r.fail("stages", "stages given twice");
  switch (c.strategy) {
    case Strategy::kPipeline:
      if (c.dp || c.tp) r.fail(c.dp ? "dp" : "tp", "pipeline strategy takes no dp or tp");
      if (!c.micro_batches) record("micro_batches=sweep");
      if (!has_stages) record("stages=auto");
      break;
    case Strategy::kTensor:
      if (c.dp || c.micro_batches || has_stages) {
        r.fail(c.dp ? "dp" : (c.micro_batches ? "micro_batches" : "stages"),
               "tensor strategy takes only tp, mesh and specs");
      }
      if (c.tp && !c.mesh.empty()) r.fail("tp", "give either tp or mesh, not both");
      if (!c.tp && c.mesh.empty()) record("tp=cores_per_slice");
      break;
    case Strategy::kCombined:
      if (!c.mesh.empty()) r.fail("mesh", "combined strategy builds its own data x model mesh");
      if (!c.tp) record("tp=1");
      if (!c.dp) record("dp=cores_per_slice/(tp*stages)");
      if (has_stages && !c.micro_batches) record("micro_batches=sweep");
      break;
  }
  if (c.micro_batches && *c.micro_batches < 1) r.fail("micro_batches", "micro_batches must be >= 1");
  if ((c.dp && *c.dp < 1) || (c.tp && *c.tp < 1)) r.fail(c.dp ? "dp" : "tp", "dp and tp must be >= 1");
  return c;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  if (c.model) {
    const auto& t = *c.model;
    Json m;
    m["hidden"] = t.hidden;
    m["layers"] = t.layers;
    m["heads"] = t.heads;
    m["ffn_hidden"] = t.ffn();
    m["vocab"] = t.vocab_size();
    m["seq_len"] = t.seq_len;
    m["batch"] = t.batch;
    m["dtype"] = to_string(t.dtype);
    m["include_biases"] = t.include_biases;
    m["experts"] = c.experts;
    m["moe_every"] = c.moe_every;
    j["model"] = std::move(m);
  } else if (c.graph_path) {
    j["graph"] = *c.graph_path;
  }
  if (!c.mesh.empty()) {
    Json m = Json::object();
    for (const auto& [axis, size] : c.mesh) m[axis] = size;
    j["mesh"] = std::move(m);
  }
  j["profile"] = c.profile;
  if (!c.profile_overrides.empty()) j["profile_overrides"] = c.profile_overrides;
  j["strategy"] = to_string(c.strategy);
  if (c.micro_batches) j["micro_batches"] = *c.micro_batches;
  if (c.stages) j["stages"] = *c.stages;
  if (!c.stage_nodes.empty()) j["stages"] = c.stage_nodes;
  if (c.dp) j["dp"] = *c.dp;
  if (c.tp) j["tp"] = *c.tp;
  if (!c.specs.empty()) {
    Json s = Json::object();
    for (const auto& [k, v] : c.specs) s[k] = v;
    j["specs"] = std::move(s);
  }
  j["overlap"] = c.overlap;
  j["remat"] = to_string(c.remat);
  j["optimizer"] = to_string(c.optimizer);
  if (!c.micro_batch_sweep.empty()) j["micro_batch_sweep"] = c.micro_batch_sweep;
  Json cap;
  Json rows = Json::array();
  for (const auto& row : c.capacity.rows) rows.push_back({{"slice", row.slice}, {"hidden", row.hidden}});
  cap["rows"] = std::move(rows);
  if (c.capacity.calibration) {
    const auto& cal = *c.capacity.calibration;
    cap["calibration"] = {{"slice", cal.slice}, {"hidden", cal.hidden}, {"params", cal.params}};
  } else {
    cap["calibration"] = nullptr;
  }
  cap["layer_cap"] = c.capacity.layer_cap;
  j["capacity"] = std::move(cap);
  if (c.checkpoint) {
    Json ck;
    if (c.checkpoint->step_time_s) ck["step_time_s"] = *c.checkpoint->step_time_s;
    ck["cost_s"] = c.checkpoint->cost_s;
    ck["mtbf_s"] = c.checkpoint->mtbf_s;
    j["checkpoint"] = std::move(ck);
  }
  if (c.output.path || !c.output.formats.empty()) {
    Json o;
    if (c.output.path) o["path"] = *c.output.path;
    if (!c.output.formats.empty()) o["formats"] = c.output.formats;
    j["output"] = std::move(o);
  }
  return j;
}

inline std::string print_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(str("cannot open config file '", path, "'"));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace distplan
