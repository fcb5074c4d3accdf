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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmrate/pcap.hpp"

namespace pmrate {

enum class Direction : std::uint8_t { ClientToServer, ServerToClient };

enum class Truth : std::uint8_t { Normal, Attack, Unknown };

std::string_view to_string(Truth t);
Truth parse_truth(std::string_view s);

struct Endpoint {
  std::string ip;
  std::uint16_t port = 0;

  std::string str() const;
  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

/// Client side first. Two keys built from opposite directions of the same
/// conversation compare equal under `same_conversation`.
struct FlowKey {
  Endpoint client;
  Endpoint server;

  friend bool operator==(const FlowKey&, const FlowKey&) = default;
};

/// Direction-agnostic identity of a conversation: endpoints in sorted order.
std::pair<Endpoint, Endpoint> conversation_of(const PacketRecord& p);
bool same_conversation(const FlowKey& a, const FlowKey& b);

struct FlowPacket {
  Direction direction = Direction::ClientToServer;
  double timestamp = 0.0;
  std::uint8_t tcp_flags = 0;
  std::uint32_t payload_len = 0;
  std::uint32_t total_len = 0;
};

using FeatureVector = std::vector<double>;

struct Flow {
  std::string id;
  FlowKey key;
  std::vector<FlowPacket> packets;
  FeatureVector features;
  double first_ts = 0.0;
  double last_ts = 0.0;
  Truth truth = Truth::Unknown;

  double duration() const { return last_ts - first_ts; }
};

struct FlowMeterConfig {
  double idle_timeout = 120.0;
  std::string id_prefix;
};

/// Groups packets into bidirectional flows. A flow ends after an RST, after
/// the ACK that follows FINs from both sides, or when the next packet of the
/// conversation arrives more than `idle_timeout` seconds after the last one.
/// Features are computed for every returned flow.
std::vector<Flow> assemble_flows(std::span<const PacketRecord> packets,
                                 const FlowMeterConfig& config = {});

/// Names of the per-flow statistics, in FeatureVector order.
std::span<const std::string_view> feature_names();
std::size_t feature_count();

FeatureVector featurize(const Flow& flow);

// Corpus files.
//
// flows CSV (schema pmrate-flows v1): a "# pmrate-flows v1" line, a header
//   row flow_id,client_ip,client_port,server_ip,server_port,first_ts,last_ts,
//   truth,<feature names...>, then one row per flow.
// flow-packets JSON-lines (schema pmrate-flow-packets v1): a header object
//   {"schema":"pmrate-flow-packets","version":1} followed by one object per
//   flow: {"flow_id","client","server","truth","packets":[[dir,flags,ts,
//   payload_len,total_len],...]} where dir is "C_to_S"/"S_to_C" and flags is
//   the "+"-joined flag label or "NONE".
void write_flows_csv(std::ostream& out, std::span<const Flow> flows);
void write_flow_packets(std::ostream& out, std::span<const Flow> flows);
/// Reads a flow-packets file and recomputes features.
std::vector<Flow> read_flow_packets(std::istream& in);

void save_corpus(const std::filesystem::path& dir, std::span<const Flow> flows);
std::vector<Flow> load_corpus(const std::filesystem::path& dir);

}  // namespace pmrate
