// Copyright 2026 The pmrate Authors
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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pmrate/rating.hpp"

namespace pmrate {

/// Fractions of the normal flows used for detector training and threshold
/// calibration. Whatever remains is held out for testing.
struct SplitFractions {
  double train = 0.5;
  double validation = 0.2;
};

struct RunConfig {
  // Inputs: PCAP files or a flow corpus directory (flows.csv + flow_packets.jsonl).
  std::vector<std::filesystem::path> pcaps;
  std::optional<std::filesystem::path> corpus;
  /// External detector scores (flow_id,score[,truth]); replaces the baseline.
  std::optional<std::filesystem::path> scores;
  std::filesystem::path output_dir = "pmrate-out";

  std::vector<std::uint16_t> server_ports;
  double flow_timeout = 120.0;

  std::size_t components = 5;
  double percentile = 0.85;

  std::size_t k = 2;
  std::size_t window = 3;

  BandThresholds bands;
  SplitFractions split;
  std::size_t runs = 5;
  std::uint64_t seed = 1;

  std::size_t align_budget = 1'000'000;
  bool count_log_moves = true;
  bool count_model_moves = true;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Overlays the keys present in `j` on `base`. Unknown keys are rejected.
RunConfig apply_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::json to_json(const RunConfig& config);

/// Stage seed derived from the master seed and a stage name, e.g.
/// sub_seed(7, "split/2").
std::uint64_t sub_seed(std::uint64_t master, std::string_view stage);

}  // namespace pmrate
