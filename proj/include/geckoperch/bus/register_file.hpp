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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "geckoperch/bus/packet.hpp"

namespace geckoperch::bus {

enum class Access : std::uint8_t { kReadOnly, kReadWrite };

struct RegisterRead {
  std::uint8_t error_flags = 0;
  std::vector<std::uint8_t> bytes;
};

// Byte-addressable control table of a bus device. Bus-side accesses are
// all-or-nothing: a request that crosses the declared size or touches a
// read-only byte is refused with the address error bit and changes nothing.
class RegisterFile {
 public:
  // Returns extra status error bits (0 when the device accepted the write).
  using WriteHook =
      std::function<std::uint8_t(std::size_t address, std::span<const std::uint8_t> data)>;
  // Called before a bus read so the device can refresh live registers.
  using ReadHook = std::function<void(std::size_t address, std::size_t length)>;

  explicit RegisterFile(std::size_t size, Access default_access = Access::kReadOnly)
      : bytes_(size, 0), access_(size, default_access) {}

  std::size_t size() const { return bytes_.size(); }

  void set_access(std::size_t address, std::size_t length, Access mode) {
    check_range(address, length);
    for (std::size_t i = 0; i < length; ++i) access_[address + i] = mode;
  }

  Access access(std::size_t address) const { return access_.at(address); }

  void set_write_hook(WriteHook hook) { write_hook_ = std::move(hook); }
  void set_read_hook(ReadHook hook) { read_hook_ = std::move(hook); }

  bool in_range(std::size_t address, std::size_t length) const {
    return address <= bytes_.size() && length <= bytes_.size() - address;
  }

  RegisterRead read(std::size_t address, std::size_t length) {
    if (!in_range(address, length)) return {error_bits::kAddressRange, {}};
    if (read_hook_) read_hook_(address, length);
    auto first = bytes_.begin() + static_cast<std::ptrdiff_t>(address);
    return {0, std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(length))};
  }

  std::uint8_t write(std::size_t address, std::span<const std::uint8_t> data) {
    if (!in_range(address, data.size())) return error_bits::kAddressRange;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (access_[address + i] != Access::kReadWrite) return error_bits::kAddressRange;
    }
    std::copy(data.begin(), data.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(address));
    return write_hook_ ? write_hook_(address, data) : 0;
  }

  // Device-side access: ignores access modes, never fires hooks.
  void store(std::size_t address, std::span<const std::uint8_t> data) {
    check_range(address, data.size());
    std::copy(data.begin(), data.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(address));
  }

  void store_u8(std::size_t address, std::uint8_t value) { store(address, std::span(&value, 1)); }

  void store_u16(std::size_t address, std::uint16_t value) {
    const std::uint8_t le[2] = {static_cast<std::uint8_t>(value & 0xFF),
                                static_cast<std::uint8_t>(value >> 8)};
    store(address, le);
  }

  std::uint8_t load_u8(std::size_t address) const { return bytes_.at(address); }

  std::uint16_t load_u16(std::size_t address) const {
    check_range(address, 2);
    return static_cast<std::uint16_t>(bytes_[address] | (bytes_[address + 1] << 8));
  }

  std::span<const std::uint8_t> view(std::size_t address, std::size_t length) const {
    check_range(address, length);
    return std::span(bytes_).subspan(address, length);
  }

 private:
  void check_range(std::size_t address, std::size_t length) const {
    if (!in_range(address, length)) throw std::out_of_range("register range outside file");
  }

  std::vector<std::uint8_t> bytes_;
  std::vector<Access> access_;
  WriteHook write_hook_;
  ReadHook read_hook_;
};

}  // namespace geckoperch::bus
