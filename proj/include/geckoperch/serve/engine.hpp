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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "geckoperch/pac/geckolog.hpp"
#include "geckoperch/serve/protocol.hpp"
#include "geckoperch/sim/simulation.hpp"

namespace geckoperch::serve {

using SessionId = std::uint64_t;

struct EngineLimits {
  std::size_t command_queue = 64;
  std::size_t outbox = 4096;  // per session; oldest telemetry dropped first
};

// Live simulation behind serve mode. One owner thread calls step(); network
// sessions call the thread-safe entry points and never touch the sim.
class ServeEngine {
 public:
  explicit ServeEngine(sim::ScenarioConfig cfg, EngineLimits limits = {})
      : cfg_(std::move(cfg)), limits_(limits) {
    rebuild();
  }

  SessionId open_session() {
    std::lock_guard lock(mu_);
    const SessionId id = next_session_++;
    sessions_[id] = Session{};
    return id;
  }

  void close_session(SessionId id) {
    std::lock_guard lock(mu_);
    sessions_.erase(id);
    if (commander_ == id) commander_.reset();
    cv_.notify_all();
  }

  // Feeds one client line. Errors that need no simulation access are
  // answered immediately; everything else waits for the next tick boundary.
  void handle_line(SessionId id, const std::string& line) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    Session& s = it->second;

    ClientMessage msg;
    try {
      msg = parse_client_message(line);
    } catch (const ProtocolError& e) {
      post(s, err_message(nullptr, "bad-message", e.what()));
      return;
    }

    if (auto* hello = std::get_if<HelloMsg>(&msg)) {
      if (hello->role == Role::kViewer) {
        s.role = Role::kViewer;
        s.said_viewer = true;
        if (commander_ == id) commander_.reset();
        post(s, {{"type", "hello"}, {"role", "viewer"}, {"session", id}});
        return;
      }
      if (!claim_commander(id)) {
        post(s, err_message(nullptr, "busy", "another session holds the command lock"));
        return;
      }
      s.role = Role::kCommander;
      s.said_viewer = false;
      post(s, {{"type", "hello"}, {"role", "commander"}, {"session", id}});
      return;
    }

    const json request_id = std::visit(
        [](const auto& m) -> json {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, HelloMsg>) {
            return nullptr;
          } else {
            return m.id;
          }
        },
        msg);

    if (s.said_viewer) {
      post(s, err_message(request_id, "viewer", "viewer sessions cannot issue commands"));
      return;
    }
    if (!claim_commander(id)) {
      post(s, err_message(request_id, "busy", "another session holds the command lock"));
      return;
    }
    s.role = Role::kCommander;

    if (auto* cmd = std::get_if<CmdMsg>(&msg)) {
      // Name and arity are checked here so bad commands never wait a tick.
      try {
        pac::HostCommand::parse(cmd->name, cmd->param);
      } catch (const pac::CommandError& e) {
        post(s, err_message(cmd->id, "invalid-command", e.what()));
        return;
      }
    }
    if (queue_.size() >= limits_.command_queue) {
      post(s, err_message(request_id, "queue-full", "command queue is full"));
      return;
    }
    queue_.push_back({id, std::move(msg)});
  }

  // Removes and returns everything queued for the session. Blocks up to
  // `wait` for at least one message.
  std::vector<std::string> drain(SessionId id, std::chrono::milliseconds wait = {}) {
    std::unique_lock lock(mu_);
    auto ready = [&] {
      auto it = sessions_.find(id);
      return it == sessions_.end() || !it->second.outbox.empty() || stopping_;
    };
    if (wait.count() > 0) cv_.wait_for(lock, wait, ready);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return {};
    std::vector<std::string> out(it->second.outbox.begin(), it->second.outbox.end());
    it->second.outbox.clear();
    it->second.dropped = 0;
    return out;
  }

  bool has_session(SessionId id) const {
    std::lock_guard lock(mu_);
    return sessions_.count(id) != 0;
  }

  // One tick: apply queued requests, advance the sim, broadcast telemetry.
  // Only the owner thread may call this.
  void step() {
    std::deque<Pending> work;
    {
      std::lock_guard lock(mu_);
      work.swap(queue_);
    }

    std::vector<std::pair<SessionId, json>> replies;
    std::vector<std::pair<SessionId, CmdMsg>> commands;
    for (auto& p : work) {
      if (auto* cmd = std::get_if<CmdMsg>(&p.msg)) {
        commands.emplace_back(p.session, *cmd);
        sim_->queue_command(pac::HostCommand::parse(cmd->name, cmd->param));
      } else if (auto* drip = std::get_if<DripMsg>(&p.msg)) {
        replies.emplace_back(p.session, run_drip(*drip));
      } else if (auto* reset = std::get_if<ResetMsg>(&p.msg)) {
        rebuild();
        for (const auto& [session, cmd] : commands) {
          replies.emplace_back(session, err_message(cmd.id, "reset", "dropped by reset"));
        }
        commands.clear();
        replies.emplace_back(p.session, json{{"type", "reset"}, {"id", reset->id}});
      }
    }

    const std::int64_t tick = sim_->tick();
    const std::vector<pac::DispatchResult> results = sim_->step_tick();
    // Scripted commands are applied first; ours are the tail.
    const std::size_t offset = results.size() - commands.size();
    for (std::size_t i = 0; i < commands.size(); ++i) {
      const auto& [session, cmd] = commands[i];
      const pac::DispatchResult& r = results[offset + i];
      if (r.ok()) {
        replies.emplace_back(session, ack_message(cmd.id, cmd.name, cmd.param, tick, r));
      } else {
        replies.emplace_back(session, err_message(cmd.id, std::string(pac::to_string(r.error)),
                                                  r.message, r.error_flags));
      }
    }

    const json telemetry = telemetry_message(*sim_->last_row(), sim_->firmware().log_flags(),
                                             sim_->firmware().state().grasp_delay_ms);
    const std::string line = telemetry.dump();

    std::lock_guard lock(mu_);
    for (auto& [session, j] : replies) {
      auto it = sessions_.find(session);
      if (it != sessions_.end()) post(it->second, j);
    }
    for (auto& [id, s] : sessions_) post(s, line, true);
    ++ticks_;
    cv_.notify_all();
  }

  // Real-time loop at the scenario tick period until stop() is called.
  void run() {
    const auto period = std::chrono::milliseconds(cfg_.tick_ms());
    auto next = std::chrono::steady_clock::now();
    while (!stopped()) {
      step();
      next += period;
      std::unique_lock lock(mu_);
      cv_.wait_until(lock, next, [&] { return stopping_; });
    }
  }

  void stop() {
    std::lock_guard lock(mu_);
    stopping_ = true;
    cv_.notify_all();
  }

  bool stopped() const {
    std::lock_guard lock(mu_);
    return stopping_;
  }

  std::uint64_t ticks() const {
    std::lock_guard lock(mu_);
    return ticks_;
  }

  std::optional<SessionId> commander() const {
    std::lock_guard lock(mu_);
    return commander_;
  }

 private:
  struct Session {
    Role role = Role::kViewer;
    bool said_viewer = false;
    std::deque<std::string> outbox;
    std::size_t dropped = 0;
  };

  struct Pending {
    SessionId session;
    ClientMessage msg;
  };

  bool claim_commander(SessionId id) {
    if (commander_ && *commander_ != id) return false;
    commander_ = id;
    return true;
  }

  void post(Session& s, const json& j) { post(s, j.dump(), false); }

  void post(Session& s, std::string line, bool telemetry) {
    if (s.outbox.size() >= limits_.outbox) {
      if (!telemetry) {
        s.outbox.pop_front();
      } else {
        ++s.dropped;
        return;
      }
    }
    s.outbox.push_back(std::move(line));
  }

  void rebuild() {
    sim_ = std::make_unique<sim::Simulation>(cfg_);
    sim_->set_keep_telemetry(false);
  }

  json run_drip(const DripMsg& m) {
    const pac::SlowDripResult r = sim_->bridge().slow_drip(m.experiment);
    const char* status = "ok";
    if (r.status == pac::SlowDripResult::Status::kLoggingActive) status = "logging-active";
    if (r.status == pac::SlowDripResult::Status::kDeliveryError) status = "delivery-error";
    json j = pac::drip_sidecar(r);
    j.erase("schema");
    j["type"] = "drip";
    j["id"] = m.id;
    j["status"] = status;
    j["data_hex"] = hex_bytes(r.bytes());
    return j;
  }

  sim::ScenarioConfig cfg_;
  EngineLimits limits_;
  std::unique_ptr<sim::Simulation> sim_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<SessionId, Session> sessions_;
  std::deque<Pending> queue_;
  std::optional<SessionId> commander_;
  SessionId next_session_ = 1;
  std::uint64_t ticks_ = 0;
  bool stopping_ = false;
};

}  // namespace geckoperch::serve
