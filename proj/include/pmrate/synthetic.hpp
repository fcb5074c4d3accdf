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
#include <span>
#include <string_view>
#include <vector>

#include "pmrate/flow.hpp"
#include "pmrate/pcap.hpp"

namespace pmrate {

enum class TrafficProfile : std::uint8_t { Normal, Slowloris };

std::string_view to_string(TrafficProfile p);
TrafficProfile parse_profile(std::string_view name);

struct SyntheticOptions {
  double start_time = 1'700'000'000.0;
  /// Flow start times are spread uniformly over this many seconds.
  double spread = 3600.0;
  /// Offset added to flow numbering, so that two batches can share a corpus.
  std::size_t first_index = 0;
};

/// Desk-scale traffic. Normal flows: handshake, one or more request/response
/// bursts of full-size server segments, FIN close. Slowloris flows:
/// handshake, a sparse trickle of small client ACK+PSH segments, usually torn
/// down with a reset. Flow ids are "nor-NNNNNN" / "gsl-NNNNNN".
std::vector<Flow> generate_flows(TrafficProfile profile, std::size_t n, std::uint64_t seed,
                                 const SyntheticOptions& options = {});

/// Packet records of the flows, sorted by time, ready for write_pcap.
std::vector<PacketRecord> to_packets(std::span<const Flow> flows);

}  // namespace pmrate
