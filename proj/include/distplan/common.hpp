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
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace distplan {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kConfig = 2,      // malformed input, invalid configuration or model
  kInfeasible = 3,  // well-formed request with no feasible plan
  kInvariant = 4,   // internal consistency check failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Invalid model, mesh, spec or configuration value.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what)
      : Error(ErrorKind::kInfeasible, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what)
      : Error(ErrorKind::kInvariant, what) {}
};

namespace detail {

inline void append_all(std::ostringstream&) {}

template <typename T, typename... Rest>
void append_all(std::ostringstream& oss, T&& token, Rest&&... rest) {
  oss << std::forward<T>(token);
  append_all(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

// Procedure: str
// concatenates streamable tokens into a string
template <typename... Args>
std::string str(Args&&... args) {
  std::ostringstream oss;
  detail::append_all(oss, std::forward<Args>(args)...);
  return oss.str();
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

template <typename T>
std::string join(const std::vector<T>& items, std::string_view sep) {
  std::ostringstream oss;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) oss << sep;
    oss << items[i];
  }
  return oss.str();
}

// ----------------------------------------------------------------------------
// Element types
// ----------------------------------------------------------------------------

enum class DType { kFloat32, kBFloat16 };

constexpr std::int64_t byte_width(DType t) {
  return t == DType::kFloat32 ? 4 : 2;
}

inline std::string to_string(DType t) {
  return t == DType::kFloat32 ? "float32" : "bfloat16";
}

inline DType parse_dtype(std::string_view name) {
  if (name == "float32") return DType::kFloat32;
  if (name == "bfloat16") return DType::kBFloat16;
  throw ValidationError(str("unknown dtype '", name, "'"));
}

// ----------------------------------------------------------------------------
// TensorShape
// ----------------------------------------------------------------------------

struct TensorShape {
  std::vector<std::int64_t> dims;
  // Empty when the axes are unnamed; otherwise one unique name per axis.
  std::vector<std::string> axis_names;
  DType dtype = DType::kFloat32;

  std::size_t rank() const { return dims.size(); }

  std::int64_t num_elements() const {
    return std::accumulate(dims.begin(), dims.end(), std::int64_t{1},
                           std::multiplies<>());
  }

  std::int64_t byte_size() const { return num_elements() * byte_width(dtype); }

  void validate() const {
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] < 1) {
        throw ValidationError(
            str("tensor extent must be >= 1, got ", dims[i], " on axis ", i));
      }
    }
    if (!axis_names.empty()) {
      if (axis_names.size() != dims.size()) {
        throw ValidationError(str("shape has ", dims.size(), " dims but ",
                                  axis_names.size(), " axis names"));
      }
      for (std::size_t i = 0; i < axis_names.size(); ++i) {
        for (std::size_t j = i + 1; j < axis_names.size(); ++j) {
          if (axis_names[i] == axis_names[j]) {
            throw ValidationError(
                str("duplicate axis name '", axis_names[i], "' in shape"));
          }
        }
      }
    }
  }

  std::string to_string() const {
    return str("(", join(dims, ","), "):", distplan::to_string(dtype));
  }

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

}  // namespace distplan
