// Copyright 2026 The geckoperch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "geckoperch/pac/bridge.hpp"
#include "geckoperch/sim/simulation.hpp"

// Serve-mode wire messages. One JSON object per line (raw TCP) or per text
// frame (WebSocket). Schemas are listed in docs/serve_protocol.md.
namespace geckoperch::serve {

using nlohmann::json;

enum class Role { kViewer, kCommander };

struct HelloMsg {
  Role role = Role::kViewer;
};

struct CmdMsg {
  std::string name;
  std::optional<std::int64_t> param;
  json id;  // echoed back verbatim; null when absent
};

struct DripMsg {
  std::uint16_t experiment = 0;
  json id;
};

struct ResetMsg {
  json id;
};

using ClientMessage = std::variant<HelloMsg, CmdMsg, DripMsg, ResetMsg>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline json take_id(const json& j) { return j.contains("id") ? j.at("id") : json(nullptr); }

inline std::optional<std::int64_t> take_param(const json& j) {
  if (!j.contains("param") || j.at("param").is_null()) return std::nullopt;
  if (!j.at("param").is_number_integer()) throw ProtocolError("param must be an integer");
  return j.at("param").get<std::int64_t>();
}

}  // namespace detail

// Parses one client line. `{"cmd":"NAME"}` is accepted as shorthand for
// `{"type":"cmd","name":"NAME"}`.
inline ClientMessage parse_client_message(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ProtocolError("not valid JSON");
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");

  if (!j.contains("type") && j.contains("cmd")) {
    if (!j.at("cmd").is_string()) throw ProtocolError("cmd must be a string");
    return CmdMsg{j.at("cmd").get<std::string>(), detail::take_param(j), detail::take_id(j)};
  }
  if (!j.contains("type") || !j.at("type").is_string()) throw ProtocolError("missing type");
  const std::string type = j.at("type").get<std::string>();

  if (type == "hello") {
    const std::string role = j.value("role", "viewer");
    if (role == "viewer") return HelloMsg{Role::kViewer};
    if (role == "commander") return HelloMsg{Role::kCommander};
    throw ProtocolError("role must be viewer or commander");
  }
  if (type == "cmd") {
    if (!j.contains("name") || !j.at("name").is_string()) throw ProtocolError("cmd needs a name");
    return CmdMsg{j.at("name").get<std::string>(), detail::take_param(j), detail::take_id(j)};
  }
  if (type == "drip") {
    if (!j.contains("experiment") || !j.at("experiment").is_number_integer()) {
      throw ProtocolError("drip needs an integer experiment");
    }
    const auto e = j.at("experiment").get<std::int64_t>();
    if (e < 0 || e > 0xFFFF) throw ProtocolError("experiment out of range 0..65535");
    return DripMsg{static_cast<std::uint16_t>(e), detail::take_id(j)};
  }
  if (type == "reset") return ResetMsg{detail::take_id(j)};
  throw ProtocolError("unknown message type '" + type + "'");
}

inline std::string hex16(std::uint16_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04X", v);
  return buf;
}

inline std::string hex_bytes(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

inline json telemetry_message(const sim::TelemetryRow& r, std::uint8_t log_flags,
                              std::uint16_t grasp_delay_ms) {
  return {{"type", "telemetry"},
          {"tick", r.tick},
          {"time_s", r.time_s},
          {"pose", {{"x", r.position.x}, {"y", r.position.y}, {"heading", r.heading}}},
          {"vel", {{"vx", r.velocity.x}, {"vy", r.velocity.y}, {"omega", r.angular_rate}}},
          {"accel_cmd",
           {{"ax", r.command.linear.x}, {"ay", r.command.linear.y}, {"alpha", r.command.angular}}},
          {"tof_mm", r.tof_mm},
          {"tof_valid", r.tof_valid},
          {"status", r.status},
          {"status_hex", hex16(r.status)},
          {"log_flags", log_flags},
          {"grasp_delay_ms", grasp_delay_ms},
          {"currents_mA", r.currents_mA},
          {"pair_loads_N", r.pair_loads_N},
          {"perched", r.perched}};
}

inline json ack_message(const json& id, const std::string& name, std::optional<std::int64_t> param,
                        std::int64_t tick, const pac::DispatchResult& r) {
  json j = {{"type", "ack"},
            {"id", id},
            {"name", name},
            {"param", param ? json(*param) : json(nullptr)},
            {"tick", tick},
            {"attempts", r.attempts}};
  if (!r.data.empty()) j["data_hex"] = hex_bytes(r.data);
  return j;
}

inline json err_message(const json& id, const std::string& code, const std::string& message,
                        std::uint8_t error_flags = 0) {
  return {{"type", "err"},
          {"id", id},
          {"code", code},
          {"message", message},
          {"error_flags", error_flags}};
}

}  // namespace geckoperch::serve
