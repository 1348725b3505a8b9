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
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "geckoperch/firmware/record.hpp"

namespace geckoperch::firmware {

// The on-board card: one file of concatenated 35-byte records per experiment.
class ExperimentLog {
 public:
  bool has(std::uint16_t experiment) const { return files_.count(experiment) != 0; }

  // Starts (or truncates) the file for `experiment`.
  void start(std::uint16_t experiment) { files_[experiment].clear(); }

  void append(std::uint16_t experiment, const RecordBytes& record) {
    auto& f = files_.at(experiment);
    f.insert(f.end(), record.begin(), record.end());
  }

  std::size_t record_count(std::uint16_t experiment) const {
    auto it = files_.find(experiment);
    return it == files_.end() ? 0 : it->second.size() / kRecordSize;
  }

  std::span<const std::uint8_t> bytes(std::uint16_t experiment) const {
    auto it = files_.find(experiment);
    if (it == files_.end()) return {};
    return it->second;
  }

  RecordBytes record(std::uint16_t experiment, std::size_t index) const {
    auto data = bytes(experiment);
    if ((index + 1) * kRecordSize > data.size()) throw std::out_of_range("record index");
    RecordBytes out{};
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(index * kRecordSize), kRecordSize,
                out.begin());
    return out;
  }

  std::vector<std::uint16_t> experiments() const {
    std::vector<std::uint16_t> ids;
    for (const auto& [id, _] : files_) ids.push_back(id);
    return ids;
  }

  // Fault injection: flips bits of one stored byte.
  void corrupt(std::uint16_t experiment, std::size_t byte_offset, std::uint8_t xor_mask) {
    files_.at(experiment).at(byte_offset) ^= xor_mask;
  }

 private:
  std::map<std::uint16_t, std::vector<std::uint8_t>> files_;
};

}  // namespace geckoperch::firmware
