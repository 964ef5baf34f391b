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
#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distplan/model_ir.hpp"

namespace distplan {

// n-dimensional array of devices with named axes; devices are numbered in
// row-major order over the axes.
class LogicalMesh {
 public:
  using Axis = std::pair<std::string, std::int64_t>;

  LogicalMesh() = default;

  static LogicalMesh create(std::vector<Axis> axes) {
    std::set<std::string> names;
    for (const auto& [name, size] : axes) {
      if (name.empty()) throw ValidationError("mesh axis name must not be empty");
      if (size < 1) {
        throw ValidationError(str("mesh axis '", name, "' has size ", size, "; must be >= 1"));
      }
      if (!names.insert(name).second) {
        throw ValidationError(str("duplicate mesh axis '", name, "'"));
      }
    }
    LogicalMesh m;
    m.axes_ = std::move(axes);
    return m;
  }

  const std::vector<Axis>& axes() const { return axes_; }

  bool has_axis(std::string_view name) const {
    return std::any_of(axes_.begin(), axes_.end(),
                       [&](const Axis& a) { return a.first == name; });
  }

  std::int64_t axis_size(std::string_view name) const {
    for (const auto& [n, s] : axes_) {
      if (n == name) return s;
    }
    throw ValidationError(str("mesh has no axis '", name, "'"));
  }

  std::int64_t axes_product(const std::vector<std::string>& names) const {
    std::int64_t p = 1;
    for (const auto& n : names) p *= axis_size(n);
    return p;
  }

  std::int64_t device_count() const {
    std::int64_t p = 1;
    for (const auto& a : axes_) p *= a.second;
    return p;
  }

  std::vector<std::int64_t> coords(std::int64_t device) const {
    if (device < 0 || device >= device_count()) {
      throw ValidationError(str("device ", device, " outside mesh of ", device_count()));
    }
    std::vector<std::int64_t> c(axes_.size());
    for (std::size_t i = axes_.size(); i-- > 0;) {
      c[i] = device % axes_[i].second;
      device /= axes_[i].second;
    }
    return c;
  }

  std::int64_t device_index(const std::vector<std::int64_t>& coords) const {
    if (coords.size() != axes_.size()) {
      throw ValidationError(str("expected ", axes_.size(), " coordinates, got ", coords.size()));
    }
    std::int64_t idx = 0;
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      if (coords[i] < 0 || coords[i] >= axes_[i].second) {
        throw ValidationError(str("coordinate ", coords[i], " outside axis '",
                                  axes_[i].first, "'"));
      }
      idx = idx * axes_[i].second + coords[i];
    }
    return idx;
  }

  std::string to_string() const {
    std::vector<std::string> parts;
    for (const auto& [n, s] : axes_) parts.push_back(str(n, "=", s));
    return "Mesh(" + join(parts, ", ") + ")";
  }

  friend bool operator==(const LogicalMesh&, const LogicalMesh&) = default;

 private:
  std::vector<Axis> axes_;
};

// For each tensor axis, the mesh axes it is split over (outermost first).
// An empty list leaves that tensor axis replicated.
struct PartitionSpec {
  std::vector<std::vector<std::string>> dims;

  static PartitionSpec replicated(std::size_t rank) {
    return PartitionSpec{std::vector<std::vector<std::string>>(rank)};
  }

  std::size_t rank() const { return dims.size(); }

  std::vector<std::string> used_axes() const {
    std::vector<std::string> out;
    for (const auto& d : dims) out.insert(out.end(), d.begin(), d.end());
    return out;
  }

  bool is_replicated() const {
    return std::all_of(dims.begin(), dims.end(), [](const auto& d) { return d.empty(); });
  }

  bool uses(std::string_view axis) const {
    for (const auto& d : dims) {
      if (std::find(d.begin(), d.end(), axis) != d.end()) return true;
    }
    return false;
  }

  void validate(const LogicalMesh& mesh) const {
    std::set<std::string> seen;
    for (const auto& d : dims) {
      for (const auto& a : d) {
        if (!mesh.has_axis(a)) {
          throw ValidationError(str("spec ", to_string(), " names mesh axis '", a,
                                    "' missing from ", mesh.to_string()));
        }
        if (!seen.insert(a).second) {
          throw ValidationError(str("spec ", to_string(), " uses mesh axis '", a,
                                    "' more than once"));
        }
      }
    }
  }

  void validate(const LogicalMesh& mesh, std::size_t tensor_rank) const {
    if (rank() != tensor_rank) {
      throw ValidationError(str("spec ", to_string(), " has ", rank(),
                                " axes but the tensor has rank ", tensor_rank));
    }
    validate(mesh);
  }

  // Drops mesh axes of size 1, which shard nothing.
  PartitionSpec normalized(const LogicalMesh& mesh) const {
    PartitionSpec out;
    for (const auto& d : dims) {
      std::vector<std::string> kept;
      for (const auto& a : d) {
        if (mesh.axis_size(a) > 1) kept.push_back(a);
      }
      out.dims.push_back(std::move(kept));
    }
    return out;
  }

  std::string to_string() const {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      parts.push_back(str("axis", i, "=", dims[i].empty() ? "~" : join(dims[i], "+")));
    }
    return "P(" + join(parts, ", ") + ")";
  }

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

// Parses the textual form `P(axis0=data, axis1=model+expert, axis2=~)`.
inline PartitionSpec parse_partition_spec(std::string_view text) {
  auto fail = [&](const std::string& why) -> ValidationError {
    return ValidationError(str("cannot parse partition spec '", text, "': ", why));
  };
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  if (s.size() < 3 || s.substr(0, 2) != "P(" || s.back() != ')') {
    throw fail("expected P(...)");
  }
  std::string body = s.substr(2, s.size() - 3);
  PartitionSpec spec;
  if (body.empty()) return spec;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t comma = body.find(',', pos);
    if (comma == std::string::npos) comma = body.size();
    std::string item = body.substr(pos, comma - pos);
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw fail(str("missing '=' in '", item, "'"));
    const std::string label = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (label != str("axis", spec.dims.size())) {
      throw fail(str("expected axis", spec.dims.size(), " but found '", label, "'"));
    }
    std::vector<std::string> axes;
    if (value != "~") {
      std::size_t p = 0;
      while (p <= value.size()) {
        std::size_t plus = value.find('+', p);
        if (plus == std::string::npos) plus = value.size();
        std::string name = value.substr(p, plus - p);
        if (name.empty() || name == "~") throw fail(str("bad mesh axis list '", value, "'"));
        axes.push_back(name);
        p = plus + 1;
      }
    }
    spec.dims.push_back(std::move(axes));
    pos = comma + 1;
  }
  std::set<std::string> seen;
  for (const auto& a : spec.used_axes()) {
    if (!seen.insert(a).second) throw fail(str("mesh axis '", a, "' used more than once"));
  }
  return spec;
}

// Per-device extent of `shape` under `spec`.
inline TensorShape shard_shape(const TensorShape& shape, const PartitionSpec& spec,
                               const LogicalMesh& mesh) {
  spec.validate(mesh, shape.rank());
  TensorShape out = shape;
  for (std::size_t i = 0; i < shape.rank(); ++i) {
    const std::int64_t divisor = mesh.axes_product(spec.dims[i]);
    if (shape.dims[i] % divisor != 0) {
      throw ValidationError(str("tensor axis ", i, " with extent ", shape.dims[i],
                                " is not divisible by ", divisor, " (mesh axes ",
                                join(spec.dims[i], "+"), ")"));
    }
    out.dims[i] = shape.dims[i] / divisor;
  }
  return out;
}

// Attention heads are split across the tensor-parallel axis, so the head
// count must be a multiple of its order.
inline void validate_tensor_parallel(const TransformerConfig& cfg, std::int64_t tp) {
  if (tp < 1) throw ValidationError(str("tensor-parallel order must be >= 1, got ", tp));
  if (cfg.heads % tp != 0) {
    throw ValidationError(str("heads=", cfg.heads, " is not divisible by tensor-parallel order tp=", tp));
  }
}

}  // namespace distplan
