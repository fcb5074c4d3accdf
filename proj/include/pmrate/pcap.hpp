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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pmrate {

/// TCP flags tracked by the event alphabet. Bit values match the TCP header
/// layout so raw header bytes can be masked directly.
namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
inline constexpr std::uint8_t kTracked = kFin | kSyn | kRst | kPsh | kAck | kUrg;

/// "+"-joined names in the fixed order SYN, ACK, FIN, RST, PSH, URG, or
/// "NONE" for an empty set.
std::string label(std::uint8_t flags);
/// Inverse of label(). Throws DataError on unknown names or bad ordering.
std::uint8_t parse_label(std::string_view text);
}  // namespace tcp_flag

struct PacketRecord {
  double timestamp = 0.0;  // seconds since epoch
  std::string src_ip;
  std::string dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tcp_flags = 0;  // subset of tcp_flag::kTracked
  std::uint32_t payload_len = 0;
  std::uint32_t total_len = 0;  // IP datagram length

  bool has(std::uint8_t flag) const { return (tcp_flags & flag) != 0; }
};

struct CaptureFilter {
  /// When non-empty, only packets with either port in the list are kept.
  std::vector<std::uint16_t> server_ports;

  bool accepts(const PacketRecord& p) const;
};

struct IngestResult {
  std::vector<PacketRecord> packets;
  std::size_t non_tcp_dropped = 0;
  std::size_t filtered_out = 0;
  std::size_t truncated_records = 0;
  /// Set when parsing stopped at a malformed record header; `packets` then
  /// holds everything read before it.
  bool partial = false;
  std::string error;
};

/// Parses a classic libpcap capture held in memory. Handles both byte orders
/// and the micro/nanosecond magic numbers. Link types: Ethernet (with
/// 802.1Q tags), raw IP, and Linux cooked capture. Throws DataError on a bad
/// global header.
IngestResult parse_pcap(std::span<const std::uint8_t> bytes,
                        const CaptureFilter& filter = {});

IngestResult ingest_pcap(const std::filesystem::path& path,
                         const CaptureFilter& filter = {});

/// Writes packets as an Ethernet/IPv4/TCP microsecond capture. Payload bytes
/// are zero-filled; NOP options pad the TCP header up to total_len when it
/// allows one. IPv6 addresses are not supported by the writer.
void write_pcap(const std::filesystem::path& path,
                std::span<const PacketRecord> packets);

}  // namespace pmrate
