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

#include "pmrate/pcap.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "pmrate/error.hpp"

namespace pmrate {
namespace {

constexpr std::uint32_t kMagicMicro = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNano = 0xA1B23C4D;
constexpr std::uint32_t kMaxRecordLen = 262144;

constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRaw = 101;
constexpr std::uint32_t kLinkSll = 113;
constexpr std::uint32_t kLinkIpv4 = 228;
constexpr std::uint32_t kLinkIpv6 = 229;
constexpr std::uint32_t kLinkSll2 = 276;

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool swap)
      : bytes_(bytes), swap_(swap) {}

  std::uint32_t u32(std::size_t off) const {
    std::uint32_t v = std::uint32_t(bytes_[off]) |
                      std::uint32_t(bytes_[off + 1]) << 8 |
                      std::uint32_t(bytes_[off + 2]) << 16 |
                      std::uint32_t(bytes_[off + 3]) << 24;
    return swap_ ? __builtin_bswap32(v) : v;
  }
  std::uint16_t u16(std::size_t off) const {
    std::uint16_t v = std::uint16_t(bytes_[off] | bytes_[off + 1] << 8);
    return swap_ ? __builtin_bswap16(v) : v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::string ip_to_string(int family, const std::uint8_t* addr) {
  char buf[INET6_ADDRSTRLEN] = {};
  ::inet_ntop(family, addr, buf, sizeof(buf));
  return buf;
}

bool parse_tcp(std::span<const std::uint8_t> seg, std::uint32_t l4_len,
               PacketRecord& out) {
  if (seg.size() < 14) return false;
  const std::uint32_t hdr_len = (seg[12] >> 4) * 4u;
  if (hdr_len < 20) return false;
  out.src_port = be16(&seg[0]);
  out.dst_port = be16(&seg[2]);
  out.tcp_flags = seg[13] & tcp_flag::kTracked;
  out.payload_len = l4_len > hdr_len ? l4_len - hdr_len : 0;
  return true;
}

bool parse_ipv4(std::span<const std::uint8_t> pkt, PacketRecord& out) {
  if (pkt.size() < 20 || (pkt[0] >> 4) != 4) return false;
  const std::uint32_t ihl = (pkt[0] & 0x0F) * 4u;
  const std::uint32_t total = be16(&pkt[2]);
  const std::uint16_t frag = be16(&pkt[6]);
  if (ihl < 20 || pkt.size() < ihl || pkt[9] != 6) return false;
  if ((frag & 0x1FFF) != 0) return false;  // non-first fragment
  out.src_ip = ip_to_string(AF_INET, &pkt[12]);
  out.dst_ip = ip_to_string(AF_INET, &pkt[16]);
  out.total_len = total;
  const std::uint32_t l4_len = total > ihl ? total - ihl : 0;
  return parse_tcp(pkt.subspan(ihl), l4_len, out);
}

bool parse_ipv6(std::span<const std::uint8_t> pkt, PacketRecord& out) {
  if (pkt.size() < 40 || (pkt[0] >> 4) != 6) return false;
  const std::uint32_t payload = be16(&pkt[4]);
  std::uint8_t next = pkt[6];
  std::size_t off = 40;
  // Chase extension headers until a transport header shows up.
  while (true) {
    if (next == 6) break;
    std::size_t ext_len = 0;
    if (next == 0 || next == 43 || next == 60) {
      if (pkt.size() < off + 2) return false;
      ext_len = (pkt[off + 1] + 1u) * 8u;
    } else if (next == 44) {
      if (pkt.size() < off + 8) return false;
      if ((be16(&pkt[off + 2]) & 0xFFF8) != 0) return false;
      ext_len = 8;
    } else if (next == 51) {
      if (pkt.size() < off + 2) return false;
      ext_len = (pkt[off + 1] + 2u) * 4u;
    } else {
      return false;
    }
    next = pkt[off];
    off += ext_len;
    if (off > pkt.size()) return false;
  }
  out.src_ip = ip_to_string(AF_INET6, &pkt[8]);
  out.dst_ip = ip_to_string(AF_INET6, &pkt[24]);
  out.total_len = 40 + payload;
  const std::size_t ext_total = off - 40;
  const std::uint32_t l4_len =
      payload > ext_total ? static_cast<std::uint32_t>(payload - ext_total) : 0;
  return parse_tcp(pkt.subspan(off), l4_len, out);
}

bool parse_ip(std::span<const std::uint8_t> pkt, PacketRecord& out) {
  if (pkt.empty()) return false;
  switch (pkt[0] >> 4) {
    case 4: return parse_ipv4(pkt, out);
    case 6: return parse_ipv6(pkt, out);
    default: return false;
  }
}

bool parse_ethertype(std::uint16_t type, std::span<const std::uint8_t> pkt,
                     PacketRecord& out) {
  if (type == 0x0800) return parse_ipv4(pkt, out);
  if (type == 0x86DD) return parse_ipv6(pkt, out);
  return false;
}

bool parse_frame(std::uint32_t link, std::span<const std::uint8_t> frame,
                 PacketRecord& out) {
  switch (link) {
    case kLinkEthernet: {
      std::size_t off = 12;
      if (frame.size() < 14) return false;
      std::uint16_t type = be16(&frame[off]);
      off += 2;
      while (type == 0x8100 || type == 0x88A8) {
        if (frame.size() < off + 4) return false;
        type = be16(&frame[off + 2]);
        off += 4;
      }
      return parse_ethertype(type, frame.subspan(off), out);
    }
    case kLinkRaw:
    case kLinkIpv4:
    case kLinkIpv6:
      return parse_ip(frame, out);
    case kLinkSll:
      if (frame.size() < 16) return false;
      return parse_ethertype(be16(&frame[14]), frame.subspan(16), out);
    case kLinkSll2:
      if (frame.size() < 20) return false;
      return parse_ethertype(be16(&frame[0]), frame.subspan(20), out);
    default:
      return false;
  }
}

void put_le32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_le16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  buf.push_back(static_cast<std::uint8_t>(v));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_be16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v));
}

struct FlagName {
  std::uint8_t bit;
  std::string_view name;
};
constexpr FlagName kFlagOrder[] = {
    {tcp_flag::kSyn, "SYN"}, {tcp_flag::kAck, "ACK"}, {tcp_flag::kFin, "FIN"},
    {tcp_flag::kRst, "RST"}, {tcp_flag::kPsh, "PSH"}, {tcp_flag::kUrg, "URG"},
};

}  // namespace

std::string tcp_flag::label(std::uint8_t flags) {
  std::string out;
  for (const FlagName& f : kFlagOrder) {
    if (flags & f.bit) {
      if (!out.empty()) out.push_back('+');
      out.append(f.name);
    }
  }
  return out.empty() ? "NONE" : out;
}

std::uint8_t tcp_flag::parse_label(std::string_view text) {
  if (text == "NONE") return 0;
  if (text.empty()) throw DataError("empty TCP flag label");
  std::uint8_t flags = 0;
  std::size_t next_rank = 0;
  while (!text.empty()) {
    const std::size_t plus = text.find('+');
    const std::string_view part = text.substr(0, plus);
    std::size_t rank = 0;
    while (rank < std::size(kFlagOrder) && kFlagOrder[rank].name != part) ++rank;
    if (rank == std::size(kFlagOrder) || rank < next_rank) {
      throw DataError("unknown or out-of-order TCP flag label: " + std::string(text));
    }
    flags |= kFlagOrder[rank].bit;
    next_rank = rank + 1;
    if (plus == std::string_view::npos) break;
    text.remove_prefix(plus + 1);
    if (text.empty()) throw DataError("dangling '+' in TCP flag label");
  }
  return flags;
}

bool CaptureFilter::accepts(const PacketRecord& p) const {
  if (server_ports.empty()) return true;
  return std::find(server_ports.begin(), server_ports.end(), p.src_port) !=
             server_ports.end() ||
         std::find(server_ports.begin(), server_ports.end(), p.dst_port) !=
             server_ports.end();
}

IngestResult parse_pcap(std::span<const std::uint8_t> bytes,
                        const CaptureFilter& filter) {
  if (bytes.size() < 24) {
    throw DataError("pcap: file shorter than the 24-byte global header");
  }
  const std::uint32_t raw_magic = Reader(bytes, false).u32(0);
  bool swap = false;
  bool nano = false;
  if (raw_magic == kMagicMicro || raw_magic == kMagicNano) {
    nano = raw_magic == kMagicNano;
  } else if (__builtin_bswap32(raw_magic) == kMagicMicro ||
             __builtin_bswap32(raw_magic) == kMagicNano) {
    swap = true;
    nano = __builtin_bswap32(raw_magic) == kMagicNano;
  } else {
    throw DataError("pcap: unrecognised magic number (pcapng is not supported)");
  }
  const Reader rd(bytes, swap);
  if (rd.u16(4) != 2) {
    throw DataError("pcap: unsupported major version " + std::to_string(rd.u16(4)));
  }
  const std::uint32_t link = rd.u32(20) & 0x0FFFFFFF;
  const double frac_scale = nano ? 1e-9 : 1e-6;

  IngestResult result;
  std::size_t off = 24;
  std::size_t index = 0;
  while (off < bytes.size()) {
    if (bytes.size() - off < 16) {
      ++result.truncated_records;
      break;
    }
    const std::uint32_t sec = rd.u32(off);
    const std::uint32_t frac = rd.u32(off + 4);
    const std::uint32_t incl = rd.u32(off + 8);
    const std::uint32_t orig = rd.u32(off + 12);
    if (incl > kMaxRecordLen || orig > kMaxRecordLen * 4u ||
        (nano ? frac >= 1000000000u : frac >= 1000000u)) {
      result.partial = true;
      result.error = "pcap: malformed record header at byte offset " +
                     std::to_string(off) + " (record " + std::to_string(index) + ")";
      break;
    }
    if (bytes.size() - off - 16 < incl) {
      ++result.truncated_records;
      break;
    }
    PacketRecord rec;
    rec.timestamp = static_cast<double>(sec) + static_cast<double>(frac) * frac_scale;
    if (parse_frame(link, bytes.subspan(off + 16, incl), rec)) {
      if (filter.accepts(rec)) {
        result.packets.push_back(std::move(rec));
      } else {
        ++result.filtered_out;
      }
    } else {
      ++result.non_tcp_dropped;
    }
    off += 16 + incl;
    ++index;
  }
  // Ingest order is capture order; enforce non-decreasing timestamps for
  // captures merged out of order.
  std::stable_sort(result.packets.begin(), result.packets.end(),
                   [](const PacketRecord& a, const PacketRecord& b) {
                     return a.timestamp < b.timestamp;
                   });
  return result;
}

IngestResult ingest_pcap(const std::filesystem::path& path,
                         const CaptureFilter& filter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pcap: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_pcap(bytes, filter);
}

void write_pcap(const std::filesystem::path& path,
                std::span<const PacketRecord> packets) {
  std::vector<std::uint8_t> buf;
  put_le32(buf, kMagicMicro);
  put_le16(buf, 2);
  put_le16(buf, 4);
  put_le32(buf, 0);
  put_le32(buf, 0);
  put_le32(buf, 65535);
  put_le32(buf, kLinkEthernet);
  for (const PacketRecord& p : packets) {
    in_addr src{}, dst{};
    if (::inet_pton(AF_INET, p.src_ip.c_str(), &src) != 1 ||
        ::inet_pton(AF_INET, p.dst_ip.c_str(), &dst) != 1) {
      throw DataError("write_pcap: only IPv4 endpoints are supported: " + p.src_ip);
    }
    // TCP options (NOPs) pad the header so the datagram keeps total_len.
    std::uint32_t tcp_len = 20;
    if (p.total_len >= 40 + p.payload_len) {
      const std::uint32_t want = p.total_len - 20 - p.payload_len;
      if (want <= 60 && want % 4 == 0) tcp_len = want;
    }
    const std::uint32_t ip_len = 20 + tcp_len + p.payload_len;
    const std::uint32_t frame_len = 14 + ip_len;
    double whole = std::floor(p.timestamp);
    auto usec = static_cast<std::uint32_t>(std::llround((p.timestamp - whole) * 1e6));
    if (usec >= 1000000u) {
      whole += 1.0;
      usec -= 1000000u;
    }
    put_le32(buf, static_cast<std::uint32_t>(whole));
    put_le32(buf, usec);
    put_le32(buf, frame_len);
    put_le32(buf, frame_len);
    // Ethernet
    for (int i = 0; i < 12; ++i) buf.push_back(i < 6 ? 0x02 : 0x04);
    put_be16(buf, 0x0800);
    // IPv4
    buf.push_back(0x45);
    buf.push_back(0);
    put_be16(buf, static_cast<std::uint16_t>(ip_len));
    put_be16(buf, 0);
    put_be16(buf, 0x4000);
    buf.push_back(64);
    buf.push_back(6);
    put_be16(buf, 0);
    const auto* s = reinterpret_cast<const std::uint8_t*>(&src.s_addr);
    const auto* d = reinterpret_cast<const std::uint8_t*>(&dst.s_addr);
    buf.insert(buf.end(), s, s + 4);
    buf.insert(buf.end(), d, d + 4);
    // TCP
    put_be16(buf, p.src_port);
    put_be16(buf, p.dst_port);
    put_le32(buf, 0);
    put_le32(buf, 0);
    buf.push_back(static_cast<std::uint8_t>(tcp_len / 4 << 4));
    buf.push_back(p.tcp_flags & tcp_flag::kTracked);
    put_be16(buf, 65535);
    put_be16(buf, 0);
    put_be16(buf, 0);
    buf.insert(buf.end(), tcp_len - 20, 0x01);
    buf.insert(buf.end(), p.payload_len, 0);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_pcap: cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

}  // namespace pmrate
