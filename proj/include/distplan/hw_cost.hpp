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
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "distplan/common.hpp"
#include "distplan/graph_json.hpp"
#include "distplan/propagation.hpp"

namespace distplan {

// Peak dense FLOP/s per core. The only hardware constants with a published
// source; everything else in a profile is a placeholder to be overridden.
inline constexpr double kTpuV4PeakFlops = 275e12;
inline constexpr double kTpuV3PeakFlops = 122e12;

inline constexpr double kDefaultHbmBytes = 34.36e9;
inline constexpr double kDefaultLinkBandwidth = 3e10;
inline constexpr double kDefaultLinkLatency = 1e-6;
inline constexpr double kDefaultMfu = 0.4;

struct HardwareProfile {
  std::string name;
  double peak_flops_per_core = 0;
  std::int64_t cores_per_slice = 1;
  double hbm_bytes_per_core = kDefaultHbmBytes;
  double link_bandwidth = kDefaultLinkBandwidth;  // bytes/s per core
  double link_latency = kDefaultLinkLatency;      // seconds per collective hop
  double mfu = kDefaultMfu;
  // Fixed host-side coordination cost added to every step.
  double coordination_overhead_s = 0;

  void validate() const {
    auto positive = [&](double v, const char* field) {
      if (!(v > 0)) throw ValidationError(str("profile '", name, "': ", field, " must be > 0, got ", v));
    };
    positive(peak_flops_per_core, "peak_flops_per_core");
    positive(double(cores_per_slice), "cores_per_slice");
    positive(hbm_bytes_per_core, "hbm_bytes_per_core");
    positive(link_bandwidth, "link_bandwidth");
    if (!(link_latency >= 0)) {
      throw ValidationError(str("profile '", name, "': link_latency must be >= 0"));
    }
    if (!(mfu > 0 && mfu <= 1)) {
      throw ValidationError(str("profile '", name, "': mfu must be in (0, 1], got ", mfu));
    }
    if (!(coordination_overhead_s >= 0)) {
      throw ValidationError(str("profile '", name, "': coordination_overhead_s must be >= 0"));
    }
  }

  friend bool operator==(const HardwareProfile&, const HardwareProfile&) = default;
};

// "v4" and "v3" denote 32-core slices; "v4-N" / "v3-N" give N cores.
inline HardwareProfile profile_by_name(const std::string& name) {
  std::string family = name;
  std::int64_t cores = 32;
  if (auto dash = name.find('-'); dash != std::string::npos) {
    family = name.substr(0, dash);
    const std::string count = name.substr(dash + 1);
    if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError(str("unknown hardware profile '", name, "'"));
    }
    cores = std::stoll(count);
  }
  HardwareProfile p;
  p.name = name;
  p.cores_per_slice = cores;
  if (family == "v4") {
    p.peak_flops_per_core = kTpuV4PeakFlops;
  } else if (family == "v3") {
    p.peak_flops_per_core = kTpuV3PeakFlops;
  } else {
    throw ValidationError(str("unknown hardware profile '", name, "'"));
  }
  p.validate();
  return p;
}

inline Json to_json(const HardwareProfile& p) {
  Json j;
  j["name"] = p.name;
  j["peak_flops_per_core"] = p.peak_flops_per_core;
  j["cores_per_slice"] = p.cores_per_slice;
  j["hbm_bytes_per_core"] = p.hbm_bytes_per_core;
  j["link_bandwidth"] = p.link_bandwidth;
  j["link_latency"] = p.link_latency;
  j["mfu"] = p.mfu;
  j["coordination_overhead_s"] = p.coordination_overhead_s;
  return j;
}

// Fields present in `j` replace those of `base`.
inline HardwareProfile apply_profile_json(HardwareProfile base, const Json& j) {
  detail::reject_unknown_keys(j, {"name", "peak_flops_per_core", "cores_per_slice",
                                  "hbm_bytes_per_core", "link_bandwidth", "link_latency",
                                  "mfu", "coordination_overhead_s"},
                              "hardware profile");
  auto num = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ValidationError(str("profile field '", key, "' must be a number"));
    field = j[key].get<double>();
  };
  if (j.contains("name")) base.name = detail::required<std::string>(j, "name", "hardware profile");
  num("peak_flops_per_core", base.peak_flops_per_core);
  if (j.contains("cores_per_slice")) {
    base.cores_per_slice = detail::required<std::int64_t>(j, "cores_per_slice", "hardware profile");
  }
  num("hbm_bytes_per_core", base.hbm_bytes_per_core);
  num("link_bandwidth", base.link_bandwidth);
  num("link_latency", base.link_latency);
  num("mfu", base.mfu);
  num("coordination_overhead_s", base.coordination_overhead_s);
  base.validate();
  return base;
}

inline HardwareProfile profile_from_json(const Json& j) {
  for (const char* key : {"name", "peak_flops_per_core", "cores_per_slice", "hbm_bytes_per_core",
                          "link_bandwidth", "link_latency", "mfu"}) {
    if (!j.contains(key)) throw ValidationError(str("hardware profile is missing '", key, "'"));
  }
  return apply_profile_json(HardwareProfile{}, j);
}

// A JSON file holding one profile object, or an array of them (first wins
// unless `name` selects another).
inline HardwareProfile load_profile_file(const std::string& path, const std::string& name = "") {
  std::ifstream in(path);
  if (!in) throw ValidationError(str("cannot open profile file '", path, "'"));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(str("profile file '", path, "': ", e.what()));
  }
  if (doc.is_array()) {
    for (const auto& item : doc) {
      if (name.empty() || item.value("name", "") == name) return profile_from_json(item);
    }
    throw ValidationError(str("profile '", name, "' not found in '", path, "'"));
  }
  return profile_from_json(doc);
}

// ----------------------------------------------------------------------------
// Cost primitives
// ----------------------------------------------------------------------------

inline double matmul_time(double flops, const HardwareProfile& p) {
  if (flops < 0) throw ValidationError(str("flops must be >= 0, got ", flops));
  return flops / (p.peak_flops_per_core * p.mfu);
}

// Ring collectives over `n` devices. An all-reduce moves each byte twice
// around the ring; gathers, scatters and all-to-alls move it once.
inline double collective_time(CollectiveKind kind, double bytes, std::int64_t n,
                              const HardwareProfile& p) {
  if (n < 1) throw ValidationError(str("collective group must be >= 1, got ", n));
  if (n == 1 || bytes <= 0) return 0.0;
  const double steps = double(n - 1);
  const double ring = bytes * steps / (double(n) * p.link_bandwidth);
  if (kind == CollectiveKind::kAllReduce) return 2.0 * ring + 2.0 * steps * p.link_latency;
  return ring + steps * p.link_latency;
}

inline double allreduce_time(double bytes, std::int64_t n, const HardwareProfile& p) {
  return collective_time(CollectiveKind::kAllReduce, bytes, n, p);
}

struct CostItem {
  std::string site;
  std::string kind;  // "compute" or a collective kind
  double seconds = 0;
};

struct CostEstimate {
  double compute_s = 0;
  double comm_s = 0;
  double total_s = 0;
  bool overlap = false;  // total = max(compute, comm) instead of the sum
  std::vector<CostItem> breakdown;
};

inline double compose(double compute_s, double comm_s, bool overlap) {
  return overlap ? std::max(compute_s, comm_s) : compute_s + comm_s;
}

// ----------------------------------------------------------------------------
// Speedup decomposition across hardware generations
// ----------------------------------------------------------------------------

// Speedup of a phase that spends fraction `comm_fraction` of its old time on
// communication, when compute gets `flops_ratio` times faster and
// communication does not change.
inline double predicted_speedup(double comm_fraction, double flops_ratio) {
  return 1.0 / ((1.0 - comm_fraction) / flops_ratio + comm_fraction);
}

// Inverse of predicted_speedup in the communication fraction.
inline double infer_comm_fraction(double observed_speedup, double flops_ratio) {
  if (!(flops_ratio > 1)) {
    throw ValidationError(str("flops_ratio must be > 1, got ", flops_ratio));
  }
  if (observed_speedup < 1) {
    throw ValidationError(str("observed speedup ", observed_speedup, " is below 1"));
  }
  if (observed_speedup > flops_ratio) {
    throw ValidationError(str("observed speedup ", observed_speedup,
                              " exceeds the compute speedup ", flops_ratio,
                              "; constant communication cannot explain it"));
  }
  return (1.0 / observed_speedup - 1.0 / flops_ratio) / (1.0 - 1.0 / flops_ratio);
}

struct PhaseSpeedup {
  double weight;   // share of the old step time
  double speedup;
};

// Overall speedup when each phase speeds up independently.
inline double combine_phase_speedups(const std::vector<PhaseSpeedup>& phases) {
  double before = 0, after = 0;
  for (const auto& ph : phases) {
    if (!(ph.weight >= 0) || !(ph.speedup > 0)) {
      throw ValidationError("phase weights must be >= 0 and speedups > 0");
    }
    before += ph.weight;
    after += ph.weight / ph.speedup;
  }
  if (!(after > 0)) throw ValidationError("phase weights must not all be zero");
  return before / after;
}

}  // namespace distplan
