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

#include <initializer_list>
#include <string>

#include "distplan/model_ir.hpp"
#include "json.hpp"

namespace distplan {

using Json = nlohmann::ordered_json;

namespace detail {

inline void reject_unknown_keys(const Json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!obj.is_object()) throw ValidationError(str(where, " must be an object"));
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(str("unknown key '", key, "' in ", where));
  }
}

template <typename T>
T required(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) {
    throw ValidationError(str("missing key '", key, "' in ", where));
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(str("key '", key, "' in ", where, " has the wrong type"));
  }
}

inline void put_shape(Json& out, const TensorShape& s) {
  out["dims"] = s.dims;
  out["dtype"] = to_string(s.dtype);
  if (!s.axis_names.empty()) out["axes"] = s.axis_names;
}

inline TensorShape get_shape(const Json& obj, const std::string& where) {
  TensorShape s;
  s.dims = required<std::vector<std::int64_t>>(obj, "dims", where);
  s.dtype = parse_dtype(required<std::string>(obj, "dtype", where));
  if (obj.contains("axes")) {
    s.axis_names = required<std::vector<std::string>>(obj, "axes", where);
  }
  s.validate();
  return s;
}

}  // namespace detail

// Nodes are emitted in topological order.
inline Json to_json(const ModelGraph& g) {
  Json doc;
  doc["nodes"] = Json::array();
  for (const auto& id : g.topological_order()) {
    const NodeSpec& n = g.node(id);
    Json node;
    node["id"] = n.id;
    node["kind"] = to_string(n.kind);
    node["params"] = Json::array();
    for (const auto& p : n.params) {
      Json param;
      param["name"] = p.name;
      detail::put_shape(param, p.shape);
      node["params"].push_back(std::move(param));
    }
    node["attrs"] = Json::object();
    for (const auto& [k, v] : n.attrs) node["attrs"][k] = v;
    doc["nodes"].push_back(std::move(node));
  }
  doc["edges"] = Json::array();
  for (const auto& e : g.edges()) {
    Json edge;
    edge["src"] = e.src;
    edge["dst"] = e.dst;
    detail::put_shape(edge, e.shape);
    doc["edges"].push_back(std::move(edge));
  }
  return doc;
}

inline ModelGraph graph_from_json(const Json& doc) {
  using detail::required;
  detail::reject_unknown_keys(doc, {"nodes", "edges"}, "graph");
  GraphData data;
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw ValidationError("graph must contain a 'nodes' array");
  }
  for (const auto& node : doc["nodes"]) {
    detail::reject_unknown_keys(node, {"id", "kind", "params", "attrs"}, "node");
    NodeSpec n;
    n.id = required<std::string>(node, "id", "node");
    const std::string where = str("node '", n.id, "'");
    n.kind = parse_node_kind(required<std::string>(node, "kind", where));
    if (node.contains("params")) {
      for (const auto& param : node["params"]) {
        detail::reject_unknown_keys(param, {"name", "dims", "dtype", "axes"},
                                    where + " param");
        n.params.push_back({required<std::string>(param, "name", where),
                            detail::get_shape(param, where)});
      }
    }
    if (node.contains("attrs")) {
      for (const auto& [k, v] : node["attrs"].items()) {
        if (!v.is_number()) {
          throw ValidationError(str("attr '", k, "' of ", where, " must be a number"));
        }
        n.attrs[k] = v.get<double>();
      }
    }
    data.nodes.push_back(std::move(n));
  }
  if (doc.contains("edges")) {
    for (const auto& edge : doc["edges"]) {
      detail::reject_unknown_keys(edge, {"src", "dst", "dims", "dtype", "axes"}, "edge");
      Edge e;
      e.src = required<std::string>(edge, "src", "edge");
      e.dst = required<std::string>(edge, "dst", "edge");
      e.shape = detail::get_shape(edge, "edge " + e.key());
      data.edges.push_back(std::move(e));
    }
  }
  return ModelGraph::create(std::move(data));
}

}  // namespace distplan
