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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include <gtest/gtest.h>

#include "geckoperch/serve/engine.hpp"
#include "geckoperch/serve/protocol.hpp"
#include "geckoperch/serve/socket_server.hpp"
#include "geckoperch/serve/websocket.hpp"
#include "geckoperch/sim/config.hpp"

using namespace geckoperch;
using namespace geckoperch::serve;
using namespace std::chrono_literals;

namespace {

sim::ScenarioConfig auto_off() {
  return sim::load_scenario(std::string(GECKOPERCH_SOURCE_DIR) + "/configs/auto_off.json");
}

std::vector<json> drain_json(ServeEngine& e, SessionId id) {
  std::vector<json> out;
  for (const auto& line : e.drain(id)) out.push_back(json::parse(line));
  return out;
}

std::vector<json> of_type(const std::vector<json>& msgs, const std::string& type) {
  std::vector<json> out;
  for (const auto& m : msgs) {
    if (m.at("type") == type) out.push_back(m);
  }
  return out;
}

// Minimal blocking TCP client for the integration tests.
class Client {
 public:
  explicit Client(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      throw std::runtime_error("connect failed");
    }
  }
  ~Client() { ::close(fd_); }

  void send(std::string_view data) { ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL); }
  void send(const std::vector<std::uint8_t>& data) {
    ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
  }

  // Appends whatever arrives within `wait`; false on EOF.
  bool pump(std::chrono::milliseconds wait) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(wait.count())) <= 0) return true;
    char buf[8192];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) return false;
    buf_.append(buf, static_cast<std::size_t>(n));
    return true;
  }

  std::optional<std::string> line(std::chrono::milliseconds timeout = 3000ms) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string out = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return out;
      }
      if (!pump(20ms)) break;
    }
    return std::nullopt;
  }

  // Waits for a message of `type` (skipping others).
  std::optional<json> wait_for(const std::string& type, std::chrono::milliseconds timeout = 3000ms) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      auto l = line(100ms);
      if (!l) continue;
      json j = json::parse(*l);
      if (j.at("type") == type) return j;
    }
    return std::nullopt;
  }

  std::string& buffer() { return buf_; }

 private:
  int fd_ = -1;
  std::string buf_;
};

// Decodes server frames (unmasked) out of a client buffer.
std::optional<ws::Frame> take_server_frame(std::string& buf) {
  if (buf.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  std::size_t n = b1 & 0x7F, pos = 2;
  if (n == 126) {
    if (buf.size() < 4) return std::nullopt;
    n = (static_cast<std::uint8_t>(buf[2]) << 8) | static_cast<std::uint8_t>(buf[3]);
    pos = 4;
  }
  if (buf.size() < pos + n) return std::nullopt;
  ws::Frame f{true, static_cast<ws::Opcode>(b0 & 0x0F), buf.substr(pos, n)};
  buf.erase(0, pos + n);
  return f;
}

struct LiveServer {
  explicit LiveServer(sim::ScenarioConfig cfg) : engine(std::move(cfg)), server(engine, 0) {
    server.start();
    owner = std::thread([this] { engine.run(); });
  }
  ~LiveServer() {
    engine.stop();
    owner.join();
    server.stop();
  }
  ServeEngine engine;
  SocketServer server;
  std::thread owner;
};

}  // namespace

TEST(Protocol, ParsesMessages) {
  auto m = parse_client_message(R"({"type":"cmd","name":"SET DELAY","param":300,"id":4})");
  auto* cmd = std::get_if<CmdMsg>(&m);
  ASSERT_TRUE(cmd);
  EXPECT_EQ(cmd->name, "SET DELAY");
  EXPECT_EQ(cmd->param, 300);
  EXPECT_EQ(cmd->id, 4);

  m = parse_client_message(R"({"cmd":"ENABLE AUTO"})");
  ASSERT_TRUE(std::get_if<CmdMsg>(&m));
  EXPECT_TRUE(std::get<CmdMsg>(m).id.is_null());

  m = parse_client_message(R"({"type":"hello","role":"commander"})");
  EXPECT_EQ(std::get<HelloMsg>(m).role, Role::kCommander);
  m = parse_client_message(R"({"type":"drip","experiment":3,"id":"a"})");
  EXPECT_EQ(std::get<DripMsg>(m).experiment, 3);
  m = parse_client_message(R"({"type":"reset"})");
  EXPECT_TRUE(std::get_if<ResetMsg>(&m));
}

TEST(Protocol, RejectsMalformed) {
  for (const char* bad : {"not json", "[1,2]", R"({"type":"warp"})", R"({"type":"cmd"})",
                          R"({"cmd":5})", R"({"type":"cmd","name":"MARK","param":1.5})",
                          R"({"type":"drip","experiment":70000})", R"({"type":"hello","role":"x"})",
                          R"({})"}) {
    EXPECT_THROW(parse_client_message(bad), ProtocolError) << bad;
  }
}

TEST(Protocol, TelemetryShape) {
  sim::TelemetryRow row;
  row.tick = 3;
  row.status = 0x0018;
  const json t = telemetry_message(row, 2, 250);
  for (const char* key : {"type", "tick", "time_s", "pose", "vel", "accel_cmd", "tof_mm",
                          "tof_valid", "status", "status_hex", "log_flags", "grasp_delay_ms",
                          "currents_mA", "pair_loads_N", "perched"}) {
    EXPECT_TRUE(t.contains(key)) << key;
  }
  EXPECT_EQ(t.at("status_hex"), "0x0018");
  EXPECT_EQ(hex_bytes({0x0A, 0xFF}), "0AFF");
}

TEST(Engine, CommandVisibleInNextTelemetry) {
  ServeEngine e(auto_off());
  const SessionId s = e.open_session();
  e.step();
  auto msgs = drain_json(e, s);
  ASSERT_EQ(of_type(msgs, "telemetry").size(), 1u);
  EXPECT_EQ(of_type(msgs, "telemetry")[0].at("status").get<int>() & 0x8, 0);

  e.handle_line(s, R"({"type":"cmd","name":"ENABLE AUTO","id":1})");
  e.step();
  msgs = drain_json(e, s);
  const auto acks = of_type(msgs, "ack");
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0].at("id"), 1);
  EXPECT_EQ(acks[0].at("tick"), 1);
  const auto tel = of_type(msgs, "telemetry");
  ASSERT_EQ(tel.size(), 1u);
  EXPECT_NE(tel[0].at("status").get<int>() & 0x8, 0);
  EXPECT_EQ(e.commander(), s);
}

TEST(Engine, StatusQueryReturnsData) {
  ServeEngine e(auto_off());
  const SessionId s = e.open_session();
  e.handle_line(s, R"({"cmd":"CLOSE"})");
  e.handle_line(s, R"({"cmd":"STATUS","id":"q"})");
  e.step();
  const auto acks = of_type(drain_json(e, s), "ack");
  ASSERT_EQ(acks.size(), 2u);
  EXPECT_EQ(acks[1].at("data_hex"), "1300");
}

TEST(Engine, SecondCommanderIsBusy) {
  ServeEngine e(auto_off());
  const SessionId a = e.open_session();
  const SessionId b = e.open_session();
  e.handle_line(a, R"({"type":"hello","role":"commander"})");
  e.handle_line(b, R"({"type":"cmd","name":"CLOSE","id":9})");
  auto msgs = drain_json(e, b);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].at("code"), "busy");
  EXPECT_EQ(msgs[0].at("id"), 9);
  e.handle_line(b, R"({"type":"hello","role":"commander"})");
  EXPECT_EQ(drain_json(e, b)[0].at("code"), "busy");

  e.close_session(a);
  e.handle_line(b, R"({"type":"hello","role":"commander"})");
  msgs = drain_json(e, b);
  EXPECT_EQ(msgs[0].at("type"), "hello");
  EXPECT_EQ(e.commander(), b);
}

TEST(Engine, ViewerCannotCommandAndSeesMonotoneTicks) {
  ServeEngine e(auto_off());
  const SessionId v = e.open_session();
  e.handle_line(v, R"({"type":"hello","role":"viewer"})");
  e.handle_line(v, R"({"cmd":"CLOSE"})");
  auto msgs = drain_json(e, v);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].at("role"), "viewer");
  EXPECT_EQ(msgs[1].at("code"), "viewer");
  EXPECT_FALSE(e.commander());

  for (int i = 0; i < 40; ++i) e.step();
  const auto tel = of_type(drain_json(e, v), "telemetry");
  ASSERT_EQ(tel.size(), 40u);
  for (std::size_t i = 1; i < tel.size(); ++i) {
    EXPECT_EQ(tel[i].at("tick").get<int>(), tel[i - 1].at("tick").get<int>() + 1);
  }
}

TEST(Engine, MalformedKeepsSession) {
  ServeEngine e(auto_off());
  const SessionId s = e.open_session();
  e.handle_line(s, "{{{");
  e.handle_line(s, R"({"cmd":"WARP","id":2})");
  auto msgs = drain_json(e, s);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].at("code"), "bad-message");
  EXPECT_EQ(msgs[1].at("code"), "invalid-command");
  EXPECT_EQ(msgs[1].at("id"), 2);
  EXPECT_TRUE(e.has_session(s));
  e.handle_line(s, R"({"cmd":"ENGAGE"})");
  e.step();
  EXPECT_EQ(of_type(drain_json(e, s), "ack").size(), 1u);
}

TEST(Engine, QueueFull) {
  ServeEngine e(auto_off(), EngineLimits{2, 4096});
  const SessionId s = e.open_session();
  for (int i = 0; i < 3; ++i) e.handle_line(s, R"({"cmd":"STATUS"})");
  const auto msgs = drain_json(e, s);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].at("code"), "queue-full");
}

TEST(Engine, OutboxDropsTelemetryWhenFull) {
  ServeEngine e(auto_off(), EngineLimits{64, 5});
  const SessionId s = e.open_session();
  for (int i = 0; i < 20; ++i) e.step();
  EXPECT_EQ(e.drain(s).size(), 5u);
}

TEST(Engine, ResetRebuildsSimulation) {
  ServeEngine e(auto_off());
  const SessionId s = e.open_session();
  for (int i = 0; i < 5; ++i) e.step();
  drain_json(e, s);
  e.handle_line(s, R"({"cmd":"CLOSE","id":1})");
  e.handle_line(s, R"({"type":"reset","id":2})");
  e.step();
  const auto msgs = drain_json(e, s);
  ASSERT_EQ(msgs.size(), 3u);
  EXPECT_EQ(msgs[0].at("code"), "reset");
  EXPECT_EQ(msgs[1].at("type"), "reset");
  EXPECT_EQ(msgs[2].at("tick"), 0);
  EXPECT_EQ(msgs[2].at("status"), 0x10);
}

TEST(Engine, DripReturnsLoggedRecords) {
  ServeEngine e(auto_off());
  const SessionId s = e.open_session();
  for (int i = 0; i < 10; ++i) e.step();
  e.handle_line(s, R"({"type":"drip","experiment":1,"id":5})");
  e.step();
  auto drips = of_type(drain_json(e, s), "drip");
  ASSERT_EQ(drips.size(), 1u);
  EXPECT_EQ(drips[0].at("status"), "logging-active");

  e.handle_line(s, R"({"cmd":"MARK","param":0})");
  e.step();
  e.handle_line(s, R"({"type":"drip","experiment":1,"id":6})");
  e.step();
  drips = of_type(drain_json(e, s), "drip");
  ASSERT_EQ(drips.size(), 1u);
  EXPECT_EQ(drips[0].at("status"), "ok");
  EXPECT_EQ(drips[0].at("record_count"), 11);
  EXPECT_EQ(drips[0].at("data_hex").get<std::string>().size(), 11u * 35u * 2u);
  EXPECT_TRUE(drips[0].at("crc_errors").empty());
}

TEST(WebSocket, AcceptKeyReferenceValue) {
  EXPECT_EQ(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, HandshakeResponse) {
  const std::string req =
      "GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "sec-websocket-key:   dGhlIHNhbXBsZSBub25jZQ==  \r\nSec-WebSocket-Version: 13\r\n\r\n";
  auto r = ws::handshake_response(req);
  ASSERT_TRUE(r);
  EXPECT_NE(r->find("101 Switching Protocols"), std::string::npos);
  EXPECT_NE(r->find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);
  EXPECT_FALSE(ws::handshake_response("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
}

TEST(WebSocket, FrameRoundTrip) {
  for (std::size_t n : {0u, 5u, 125u, 126u, 1000u, 70000u}) {
    const std::string payload(n, 'q');
    auto bytes = ws::encode_masked_frame(ws::Opcode::kText, payload, {1, 2, 3, 4});
    auto f = ws::decode_frame(bytes, 1 << 20);
    ASSERT_TRUE(f.frame) << n;
    EXPECT_EQ(f.frame->payload, payload);
    EXPECT_EQ(f.consumed, bytes.size());
    bytes.pop_back();
    EXPECT_FALSE(ws::decode_frame(bytes, 1 << 20).frame);
  }
  const auto unmasked = ws::encode_frame(ws::Opcode::kText, "hi");
  EXPECT_TRUE(ws::decode_frame(unmasked).protocol_error);
  EXPECT_EQ(ws::base64(reinterpret_cast<const unsigned char*>("foobar"), 6), "Zm9vYmFy");
}

TEST(SocketServer, RawTcpCommanderAndViewer) {
  LiveServer live(auto_off());
  Client commander(live.server.port());
  Client viewer(live.server.port());
  viewer.send(R"({"type":"hello","role":"viewer"})" "\n");
  ASSERT_TRUE(viewer.wait_for("hello"));

  commander.send(R"({"type":"cmd","name":"ENABLE AUTO","id":"x"})" "\n");
  auto ack = commander.wait_for("ack");
  ASSERT_TRUE(ack);
  EXPECT_EQ(ack->at("id"), "x");
  const int acked_tick = ack->at("tick");

  std::int64_t last = -1;
  bool saw_auto = false;
  for (int i = 0; i < 50 && !saw_auto; ++i) {
    auto t = viewer.wait_for("telemetry");
    ASSERT_TRUE(t);
    const std::int64_t tick = t->at("tick");
    EXPECT_GT(tick, last);
    last = tick;
    if (t->at("status").get<int>() & 0x8) {
      saw_auto = true;
      EXPECT_EQ(tick, acked_tick);
    }
  }
  EXPECT_TRUE(saw_auto);

  viewer.send(R"({"cmd":"CLOSE"})" "\n");
  auto err = viewer.wait_for("err");
  ASSERT_TRUE(err);
  EXPECT_EQ(err->at("code"), "viewer");
}

TEST(SocketServer, WebSocketSession) {
  LiveServer live(auto_off());
  Client c(live.server.port());
  c.send(
      "GET / HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const auto deadline = std::chrono::steady_clock::now() + 3s;
  while (c.buffer().find("\r\n\r\n") == std::string::npos &&
         std::chrono::steady_clock::now() < deadline) {
    c.pump(20ms);
  }
  const auto end = c.buffer().find("\r\n\r\n");
  ASSERT_NE(end, std::string::npos);
  EXPECT_NE(c.buffer().find("s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);
  c.buffer().erase(0, end + 4);

  c.send(ws::encode_masked_frame(ws::Opcode::kText, R"({"cmd":"ENGAGE","id":7})", {9, 8, 7, 6}));
  c.send(ws::encode_masked_frame(ws::Opcode::kPing, "pp", {1, 1, 1, 1}));
  bool acked = false, ponged = false, telemetry = false;
  const auto until = std::chrono::steady_clock::now() + 3s;
  while (!(acked && ponged && telemetry) && std::chrono::steady_clock::now() < until) {
    c.pump(20ms);
    while (auto f = take_server_frame(c.buffer())) {
      if (f->opcode == ws::Opcode::kPong) {
        ponged = f->payload == "pp";
      } else if (f->opcode == ws::Opcode::kText) {
        const json j = json::parse(f->payload);
        if (j.at("type") == "ack" && j.at("id") == 7) acked = true;
        if (j.at("type") == "telemetry") telemetry = true;
      }
    }
  }
  EXPECT_TRUE(acked);
  EXPECT_TRUE(ponged);
  EXPECT_TRUE(telemetry);
}

TEST(SocketServer, SilentClientGetsRawTelemetry) {
  LiveServer live(auto_off());
  Client c(live.server.port());
  auto t = c.wait_for("telemetry");
  ASSERT_TRUE(t);
  EXPECT_TRUE(t->contains("pose"));
}

TEST(SocketServer, DisconnectReleasesCommander) {
  LiveServer live(auto_off());
  {
    Client a(live.server.port());
    a.send(R"({"type":"hello","role":"commander"})" "\n");
    ASSERT_TRUE(a.wait_for("hello"));
  }
  Client b(live.server.port());
  std::optional<json> hello;
  for (int i = 0; i < 20 && !hello; ++i) {
    b.send(R"({"type":"hello","role":"commander"})" "\n");
    auto m = b.wait_for("hello", 200ms);
    if (m) hello = m;
  }
  ASSERT_TRUE(hello);
  EXPECT_EQ(hello->at("role"), "commander");
}
