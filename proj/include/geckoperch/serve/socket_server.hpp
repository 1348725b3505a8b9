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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "geckoperch/serve/engine.hpp"
#include "geckoperch/serve/websocket.hpp"

namespace geckoperch::serve {

// TCP front end for a ServeEngine. Each connection is either a WebSocket
// (first request is an HTTP upgrade) or raw line-delimited JSON.
class SocketServer {
 public:
  SocketServer(ServeEngine& engine, std::uint16_t port, const std::string& bind = "127.0.0.1")
      : engine_(engine) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind.c_str(), &addr.sin_addr) != 1) {
      ::close(listen_fd_);
      throw std::runtime_error("bad bind address '" + bind + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
        ::listen(listen_fd_, 16) < 0) {
      const std::string err = std::strerror(errno);
      ::close(listen_fd_);
      throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  ~SocketServer() { stop(); }

  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  std::uint16_t port() const { return port_; }

  void start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    ::close(listen_fd_);
    std::lock_guard lock(conn_mu_);
    for (auto& c : connections_) ::shutdown(c->fd, SHUT_RDWR);
    for (auto& c : connections_) {
      if (c->reader.joinable()) c->reader.join();
      if (c->writer.joinable()) c->writer.join();
      ::close(c->fd);
    }
    connections_.clear();
  }

 private:
  struct Connection {
    int fd = -1;
    SessionId session = 0;
    bool websocket = false;
    std::atomic<bool> ready{false};  // transport decided
    std::atomic<bool> alive{true};
    std::mutex send_mu;
    std::thread reader;
    std::thread writer;
  };

  void accept_loop() {
    while (!stopping_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) {
        reap();
        continue;
      }
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto c = std::make_unique<Connection>();
      c->fd = fd;
      c->session = engine_.open_session();
      Connection* raw = c.get();
      raw->reader = std::thread([this, raw] { read_loop(*raw); });
      raw->writer = std::thread([this, raw] { write_loop(*raw); });
      std::lock_guard lock(conn_mu_);
      connections_.push_back(std::move(c));
    }
  }

  // Joins connections whose peer went away.
  void reap() {
    std::lock_guard lock(conn_mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      Connection& c = **it;
      if (c.alive) {
        ++it;
        continue;
      }
      if (c.reader.joinable()) c.reader.join();
      if (c.writer.joinable()) c.writer.join();
      ::close(c.fd);
      it = connections_.erase(it);
    }
  }

  bool send_all(Connection& c, const void* data, std::size_t n) {
    std::lock_guard lock(c.send_mu);
    const char* p = static_cast<const char*>(data);
    while (n > 0) {
      const ssize_t w = ::send(c.fd, p, n, MSG_NOSIGNAL);
      if (w <= 0) return false;
      p += w;
      n -= static_cast<std::size_t>(w);
    }
    return true;
  }

  void finish(Connection& c) {
    if (!c.alive.exchange(false)) return;
    engine_.close_session(c.session);
    ::shutdown(c.fd, SHUT_RDWR);
  }

  void read_loop(Connection& c) {
    std::vector<std::uint8_t> buf;
    bool decided = false;
    char chunk[4096];
    const auto opened = std::chrono::steady_clock::now();
    while (c.alive && !stopping_) {
      pollfd p{c.fd, POLLIN, 0};
      const int ready = ::poll(&p, 1, 20);
      if (ready == 0) {
        // A silent client is a raw viewer.
        if (!decided && buf.empty() &&
            std::chrono::steady_clock::now() - opened > kDecideTimeout) {
          decided = true;
          c.ready = true;
        }
        continue;
      }
      const ssize_t n = ready < 0 ? -1 : ::recv(c.fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.insert(buf.end(), chunk, chunk + n);

      if (!decided) {
        const std::string_view head(reinterpret_cast<const char*>(buf.data()), buf.size());
        if (head.size() < 4 && std::string_view("GET ").substr(0, head.size()) == head) continue;
        if (head.substr(0, 4) == "GET ") {
          const std::size_t end = head.find("\r\n\r\n");
          if (end == std::string_view::npos) {
            if (buf.size() > 16384) break;
            continue;
          }
          auto response = ws::handshake_response(head.substr(0, end + 4));
          if (!response) {
            const std::string bad = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n";
            send_all(c, bad.data(), bad.size());
            break;
          }
          send_all(c, response->data(), response->size());
          buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(end + 4));
          c.websocket = true;
        }
        decided = true;
        c.ready = true;
      }

      if (c.websocket ? !pump_frames(c, buf) : !pump_lines(c, buf)) break;
    }
    finish(c);
  }

  bool pump_lines(Connection& c, std::vector<std::uint8_t>& buf) {
    for (;;) {
      auto nl = std::find(buf.begin(), buf.end(), '\n');
      if (nl == buf.end()) return buf.size() <= kMaxLine;
      std::string line(buf.begin(), nl);
      buf.erase(buf.begin(), nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) engine_.handle_line(c.session, line);
    }
  }

  bool pump_frames(Connection& c, std::vector<std::uint8_t>& buf) {
    for (;;) {
      ws::FrameParse f = ws::decode_frame(buf, kMaxLine);
      if (f.protocol_error) return false;
      if (!f.frame) return true;
      buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(f.consumed));
      switch (f.frame->opcode) {
        case ws::Opcode::kText:
        case ws::Opcode::kBinary: {
          std::size_t start = 0;
          const std::string& text = f.frame->payload;
          while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            std::string line = text.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) engine_.handle_line(c.session, line);
            start = end + 1;
          }
          break;
        }
        case ws::Opcode::kPing: {
          auto pong = ws::encode_frame(ws::Opcode::kPong, f.frame->payload);
          send_all(c, pong.data(), pong.size());
          break;
        }
        case ws::Opcode::kClose: {
          auto close = ws::encode_frame(ws::Opcode::kClose, "");
          send_all(c, close.data(), close.size());
          return false;
        }
        default:
          break;
      }
    }
  }

  void write_loop(Connection& c) {
    while (c.alive && !stopping_ && !c.ready) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    while (c.alive && !stopping_) {
      for (const std::string& line : engine_.drain(c.session, std::chrono::milliseconds(100))) {
        bool ok;
        if (c.websocket) {
          auto frame = ws::encode_frame(ws::Opcode::kText, line);
          ok = send_all(c, frame.data(), frame.size());
        } else {
          const std::string out = line + "\n";
          ok = send_all(c, out.data(), out.size());
        }
        if (!ok) {
          finish(c);
          return;
        }
      }
      if (!engine_.has_session(c.session)) return;
    }
  }

  static constexpr std::size_t kMaxLine = 1 << 16;
  static constexpr std::chrono::milliseconds kDecideTimeout{200};

  ServeEngine& engine_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::list<std::unique_ptr<Connection>> connections_;
};

}  // namespace geckoperch::serve
