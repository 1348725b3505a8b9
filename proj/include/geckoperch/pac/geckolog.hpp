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
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "geckoperch/firmware/record.hpp"
#include "geckoperch/pac/bridge.hpp"

namespace geckoperch::pac {

// Field-by-field decode of one record for the sidecar.
inline nlohmann::json record_to_json(const firmware::RecordBytes& bytes) {
  const firmware::ExperimentRecord r = firmware::decode_record(bytes);
  char status[8];
  std::snprintf(status, sizeof status, "0x%04X", r.status);
  char crc[8];
  std::snprintf(crc, sizeof crc, "0x%04X", r.crc16);
  return {{"seq", r.seq},
          {"timestamp_ms", r.timestamp_ms},
          {"experiment_id", r.experiment_id},
          {"tof_mm", r.tof_mm},
          {"tof_valid", r.tof_valid != 0},
          {"servo_current_mA", r.servo_current_mA},
          {"servo_command", r.servo_command},
          {"status", r.status},
          {"status_hex", status},
          {"grasp_delay_ms", r.grasp_delay_ms},
          {"crc16", crc},
          {"crc_ok", firmware::record_crc_ok(bytes)}};
}

inline nlohmann::json drip_sidecar(const SlowDripResult& drip) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : drip.records) records.push_back(record_to_json(r));
  return {{"schema", "geckoperch.geckolog/1"},
          {"experiment", drip.experiment},
          {"record_size", firmware::kRecordSize},
          {"record_count", drip.records.size()},
          {"crc_errors", drip.crc_errors},
          {"records", records}};
}

struct GeckologPaths {
  std::filesystem::path log;
  std::filesystem::path sidecar;
};

// Writes `exp<N>.geckolog` (raw concatenated records) and `exp<N>.json`.
inline GeckologPaths write_geckolog(const std::filesystem::path& dir, const SlowDripResult& drip) {
  std::filesystem::create_directories(dir);
  const std::string stem = "exp" + std::to_string(drip.experiment);
  GeckologPaths paths{dir / (stem + ".geckolog"), dir / (stem + ".json")};

  const std::vector<std::uint8_t> bytes = drip.bytes();
  std::ofstream raw(paths.log, std::ios::binary);
  raw.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!raw) throw std::runtime_error("cannot write " + paths.log.string());

  std::ofstream side(paths.sidecar);
  side << drip_sidecar(drip).dump(2) << "\n";
  if (!side) throw std::runtime_error("cannot write " + paths.sidecar.string());
  return paths;
}

// Reads a `.geckolog` back into records; the size must be a whole number of
// records.
inline std::vector<firmware::RecordBytes> read_geckolog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % firmware::kRecordSize != 0) {
    throw std::runtime_error(path.string() + " is not a whole number of 35-byte records");
  }
  std::vector<firmware::RecordBytes> out(bytes.size() / firmware::kRecordSize);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(i * firmware::kRecordSize),
                firmware::kRecordSize, out[i].begin());
  }
  return out;
}

}  // namespace geckoperch::pac
