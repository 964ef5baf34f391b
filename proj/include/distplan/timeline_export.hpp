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

#include <cstdio>
#include <sstream>
#include <string>

#include "distplan/graph_json.hpp"
#include "distplan/simulator.hpp"

namespace distplan {

inline Json to_json(const Timeline& t) {
  Json out;
  out["step_time"] = t.step_time;
  out["device_count"] = t.device_count;
  out["bubble_fraction"] = t.bubble_fraction();
  out["per_device_utilization"] = t.per_device_utilization;
  Json events = Json::array();
  for (const auto& e : t.events) {
    Json j;
    j["device"] = e.device;
    j["start"] = e.start;
    j["end"] = e.end;
    j["kind"] = to_string(e.kind);
    j["label"] = e.label;
    j["micro_batch"] = e.micro_batch ? Json(*e.micro_batch) : Json(nullptr);
    if (e.payload_bytes) j["payload_bytes"] = *e.payload_bytes;
    events.push_back(std::move(j));
  }
  out["events"] = std::move(events);
  return out;
}

namespace detail {

inline const char* event_color(EventKind k) {
  switch (k) {
    case EventKind::kForward: return "#4c78a8";
    case EventKind::kBackward: return "#f58518";
    case EventKind::kCollective: return "#e45756";
    case EventKind::kSendRecv: return "#72b7b2";
    case EventKind::kIdle: return "#e8e8e8";
  }
  return "#e8e8e8";
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Gantt chart: one row per device, one rect per event, colored by kind.
inline std::string to_svg(const Timeline& t) {
  constexpr double kLeft = 80, kWidth = 960, kRow = 28, kGap = 6, kTop = 30;
  const double height = kTop + double(t.device_count) * (kRow + kGap) + 40;
  const double scale = t.step_time > 0 ? kWidth / t.step_time : 0.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt(kLeft + kWidth + 20)
     << "\" height=\"" << detail::fmt(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << detail::fmt(kLeft) << "\" y=\"18\">step " << t.step_time << " s, bubble "
     << detail::fmt(100 * t.bubble_fraction()) << "%</text>\n";
  for (std::int64_t d = 0; d < t.device_count; ++d) {
    const double y = kTop + double(d) * (kRow + kGap);
    os << "<text x=\"4\" y=\"" << detail::fmt(y + kRow * 0.65) << "\">D_" << d << "</text>\n";
  }
  for (const auto& e : t.events) {
    const double y = kTop + double(e.device) * (kRow + kGap);
    const double x = kLeft + e.start * scale;
    const double w = e.duration() * scale;
    std::string title = e.label;
    if (e.micro_batch) title += str(" mb=", *e.micro_batch);
    os << "<rect class=\"" << to_string(e.kind) << "\" x=\"" << detail::fmt(x) << "\" y=\""
       << detail::fmt(y) << "\" width=\"" << detail::fmt(w) << "\" height=\"" << detail::fmt(kRow)
       << "\" fill=\"" << detail::event_color(e.kind) << "\" stroke=\"#ffffff\" stroke-width=\"0.5\">"
       << "<title>" << detail::xml_escape(title) << "</title></rect>\n";
    if (w > 36 && e.kind != EventKind::kIdle) {
      os << "<text x=\"" << detail::fmt(x + 3) << "\" y=\"" << detail::fmt(y + kRow * 0.65)
         << "\" fill=\"#ffffff\">" << detail::xml_escape(e.label) << "</text>\n";
    }
  }
  const double ly = kTop + double(t.device_count) * (kRow + kGap) + 14;
  double lx = kLeft;
  for (EventKind k : {EventKind::kForward, EventKind::kBackward, EventKind::kCollective,
                      EventKind::kSendRecv, EventKind::kIdle}) {
    os << "<rect x=\"" << detail::fmt(lx) << "\" y=\"" << detail::fmt(ly) << "\" width=\"12\" height=\"12\" fill=\""
       << detail::event_color(k) << "\"/><text x=\"" << detail::fmt(lx + 16) << "\" y=\""
       << detail::fmt(ly + 10) << "\">" << to_string(k) << "</text>\n";
    lx += 110;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace distplan
