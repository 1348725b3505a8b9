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

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <openssl/sha.h>

// Minimal RFC 6455 server side: handshake and unfragmented frames.
namespace geckoperch::serve::ws {

constexpr std::string_view kAcceptGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

enum class Opcode : std::uint8_t {
  kContinuation = 0x0,
  kText = 0x1,
  kBinary = 0x2,
  kClose = 0x8,
  kPing = 0x9,
  kPong = 0xA,
};

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                  static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

// Sec-WebSocket-Accept for a client key.
inline std::string accept_key(std::string_view client_key) {
  std::string joined(client_key);
  joined += kAcceptGuid;
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest.data());
  return base64(digest.data(), digest.size());
}

// Value of `name` in an HTTP header block, case-insensitive; trimmed.
inline std::optional<std::string> header_value(std::string_view request, std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string want = lower(name);
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + 2;
    const std::size_t end = request.find("\r\n", start);
    const std::string_view line =
        request.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos && lower(line.substr(0, colon)) == want) {
      std::string_view v = line.substr(colon + 1);
      while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
      return std::string(v);
    }
    pos = end;
  }
  return std::nullopt;
}

// 101 response for an upgrade request; nullopt when the request is not a
// WebSocket upgrade.
inline std::optional<std::string> handshake_response(std::string_view request) {
  if (request.substr(0, 4) != "GET ") return std::nullopt;
  auto key = header_value(request, "Sec-WebSocket-Key");
  if (!key) return std::nullopt;
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         accept_key(*key) + "\r\n\r\n";
}

// Server-to-client frame (never masked).
inline std::vector<std::uint8_t> encode_frame(Opcode op, std::string_view payload) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<std::uint8_t>(n));
  } else if (n <= 0xFFFF) {
    out.push_back(126);
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
  } else {
    out.push_back(127);
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Frame {
  bool fin = true;
  Opcode opcode = Opcode::kText;
  std::string payload;
};

struct FrameParse {
  std::optional<Frame> frame;  // nullopt: need more bytes
  std::size_t consumed = 0;
  bool protocol_error = false;
};

// Client-to-server frame; clients must mask.
inline FrameParse decode_frame(const std::vector<std::uint8_t>& buf,
                               std::size_t max_payload = 1 << 20) {
  FrameParse r;
  if (buf.size() < 2) return r;
  Frame f;
  f.fin = buf[0] & 0x80;
  f.opcode = static_cast<Opcode>(buf[0] & 0x0F);
  const bool masked = buf[1] & 0x80;
  std::uint64_t n = buf[1] & 0x7F;
  std::size_t pos = 2;
  if (n == 126) {
    if (buf.size() < 4) return r;
    n = (static_cast<std::uint64_t>(buf[2]) << 8) | buf[3];
    pos = 4;
  } else if (n == 127) {
    if (buf.size() < 10) return r;
    n = 0;
    for (int i = 0; i < 8; ++i) n = (n << 8) | buf[2 + i];
    pos = 10;
  }
  if (!masked || n > max_payload) {
    r.protocol_error = true;
    return r;
  }
  if (buf.size() < pos + 4 + n) return r;
  const std::uint8_t* mask = &buf[pos];
  pos += 4;
  f.payload.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.payload[i] = static_cast<char>(buf[pos + i] ^ mask[i % 4]);
  }
  r.consumed = pos + n;
  r.frame = std::move(f);
  return r;
}

// Client-side encoder, used by tests and tools.
inline std::vector<std::uint8_t> encode_masked_frame(Opcode op, std::string_view payload,
                                                     std::array<std::uint8_t, 4> mask) {
  std::vector<std::uint8_t> out = encode_frame(op, payload);
  const std::size_t header = out.size() - payload.size();
  out[1] |= 0x80;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(header), mask.begin(), mask.end());
  for (std::size_t i = 0; i < payload.size(); ++i) out[header + 4 + i] ^= mask[i % 4];
  return out;
}

}  // namespace geckoperch::serve::ws
