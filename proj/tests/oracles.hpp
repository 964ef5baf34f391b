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

// Reference computations for tests. They work from serialized graphs or
// first principles and share no code paths with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace oracle {

using Json = nlohmann::json;

inline std::int64_t elements(const Json& dims) {
  std::int64_t n = 1;
  for (const auto& d : dims) n *= d.get<std::int64_t>();
  return n;
}

inline std::int64_t width(const Json& tensor) {
  return tensor.at("dtype").get<std::string>() == "bfloat16" ? 2 : 4;
}

// Parameter count by walking every param tensor of a serialized graph.
inline std::int64_t param_count(const Json& graph) {
  std::int64_t n = 0;
  for (const auto& node : graph.at("nodes")) {
    for (const auto& p : node.at("params")) n += elements(p.at("dims"));
  }
  return n;
}

// Stashed activation bytes. Without remat every edge is kept. With per-block
// remat an edge is interior when both endpoints carry the same block attr;
// interior edges of the largest block stay, all other interior edges go.
inline std::int64_t activation_bytes(const Json& graph, bool per_block) {
  std::map<std::string, const Json*> nodes;
  for (const auto& node : graph.at("nodes")) nodes[node.at("id").get<std::string>()] = &node;
  auto block_of = [&](const std::string& id) -> std::optional<double> {
    const Json& attrs = nodes.at(id)->at("attrs");
    if (attrs.contains("block")) return attrs.at("block").get<double>();
    return std::nullopt;
  };
  std::int64_t total = 0, crossing = 0;
  std::map<double, std::int64_t> inside;
  for (const auto& e : graph.at("edges")) {
    const std::int64_t b = elements(e.at("dims")) * width(e);
    total += b;
    auto s = block_of(e.at("src").get<std::string>());
    auto d = block_of(e.at("dst").get<std::string>());
    if (s && d && *s == *d) {
      inside[*s] += b;
    } else {
      crossing += b;
    }
  }
  if (!per_block) return total;
  std::int64_t peak = 0;
  for (const auto& [k, v] : inside) peak = std::max(peak, v);
  return crossing + peak;
}

// Forward FLOPs of a dense decoder written out term by term: QKV, attention
// scores and weighted sum, attention out, two MLP matmuls, unembedding.
inline double decoder_forward_flops(double b, double s, double h, double ffn, double vocab,
                                    double layers) {
  const double tokens = b * s;
  const double per_block = 2 * tokens * h * 3 * h + 4 * b * s * s * h + 2 * tokens * h * h +
                           2 * tokens * h * ffn + 2 * tokens * ffn * h;
  return layers * per_block + 2 * tokens * h * vocab;
}

// Decoder parameters: per block two layer norms (gain and bias, always
// present), QKV, out and the MLP, with optional matmul biases; plus the
// embedding and unembedding tables.
inline double decoder_params(double h, double ffn, double vocab, double layers, bool biases) {
  double block = 4 * h + 3 * h * h + h * h + 2 * h * ffn;
  if (biases) block += 3 * h + h + ffn + h;
  return layers * block + 2 * vocab * h;
}

// GPipe by recurrence over (stage, micro-batch) cells. Forward cell (s,k)
// starts when stage s is free and (s-1,k) finished; backward runs k from
// m-1 down, stages from p-1 down, and cell (s,k) waits on (s+1,k).
struct PipelineTimes {
  double step = 0;
  double idle = 0;  // summed over stages
};

inline PipelineTimes gpipe(const std::vector<double>& fwd, const std::vector<double>& bwd,
                           int m) {
  const int p = static_cast<int>(fwd.size());
  std::vector<std::vector<double>> F(p, std::vector<double>(m)), B(p, std::vector<double>(m));
  for (int k = 0; k < m; ++k) {
    for (int s = 0; s < p; ++s) {
      double start = 0;
      if (k > 0) start = std::max(start, F[s][k - 1]);
      if (s > 0) start = std::max(start, F[s - 1][k]);
      F[s][k] = start + fwd[s];
    }
  }
  for (int k = m - 1; k >= 0; --k) {
    for (int s = p - 1; s >= 0; --s) {
      double start = F[s][m - 1];
      if (k < m - 1) start = std::max(start, B[s][k + 1]);
      if (s < p - 1) start = std::max(start, B[s + 1][k]);
      B[s][k] = start + bwd[s];
    }
  }
  PipelineTimes t;
  for (int s = 0; s < p; ++s) t.step = std::max(t.step, B[s][0]);
  for (int s = 0; s < p; ++s) t.idle += t.step - double(m) * (fwd[s] + bwd[s]);
  return t;
}

// Ring collective: each of n-1 steps moves bytes/n per device; all-reduce
// runs a reduce-scatter then an all-gather.
inline double ring_time(const std::string& kind, double bytes, double n, double bw, double lat) {
  if (n <= 1) return 0;
  const double one_pass = (n - 1) * (bytes / n) / bw + (n - 1) * lat;
  return kind == "all_reduce" ? 2 * one_pass : one_pass;
}

// Grid search of the checkpoint overhead C/T + T/(2M) over T in
// (0, upper], with `points` evenly spaced samples.
struct GridMin {
  double argmin = 0;
  double step = 0;
};

inline GridMin checkpoint_grid_min(double cost, double mtbf, double upper, int points) {
  GridMin g;
  g.step = upper / points;
  double best = INFINITY;
  for (int i = 1; i <= points; ++i) {
    const double T = g.step * i;
    const double v = cost / T + T / (2 * mtbf);
    if (v < best) {
      best = v;
      g.argmin = T;
    }
  }
  return g;
}

// Old/new time ratio of a phase whose compute share (1-c) speeds up by r.
inline double amdahl(double c, double r) { return 1.0 / ((1 - c) / r + c); }

// Solves amdahl(c, r) == s for c by bisection.
inline double solve_comm_fraction(double s, double r) {
  double lo = 0, hi = 1;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    // amdahl decreases in c.
    if (amdahl(mid, r) > s) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
