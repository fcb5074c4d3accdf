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

#include "pmrate/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "pmrate/csv.hpp"
#include "pmrate/error.hpp"

namespace pmrate {
namespace {

constexpr std::array<std::string_view, 40> kFeatureNames = {
    "duration",
    "packets_total",
    "packets_fwd",
    "packets_bwd",
    "bytes_total",
    "bytes_fwd",
    "bytes_bwd",
    "payload_total",
    "payload_fwd",
    "payload_bwd",
    "syn_count",
    "ack_count",
    "fin_count",
    "rst_count",
    "psh_count",
    "urg_count",
    "pkt_len_mean",
    "pkt_len_std",
    "pkt_len_min",
    "pkt_len_max",
    "fwd_pkt_len_mean",
    "fwd_pkt_len_std",
    "fwd_pkt_len_min",
    "fwd_pkt_len_max",
    "bwd_pkt_len_mean",
    "bwd_pkt_len_std",
    "bwd_pkt_len_min",
    "bwd_pkt_len_max",
    "iat_mean",
    "iat_std",
    "iat_min",
    "iat_max",
    "fwd_iat_mean",
    "fwd_iat_std",
    "bwd_iat_mean",
    "bwd_iat_std",
    "packets_per_second",
    "bytes_per_second",
    "down_up_ratio",
    "payload_mean",
};

// Population statistics over a sample; all zero when empty.
struct Summary {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  s.min = xs.front();
  s.max = xs.front();
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

std::vector<double> gaps(const std::vector<double>& ts) {
  std::vector<double> out;
  for (std::size_t i = 1; i < ts.size(); ++i) out.push_back(ts[i] - ts[i - 1]);
  return out;
}

struct Building {
  std::vector<const PacketRecord*> packets;
  bool fin_from_lo = false;
  bool fin_from_hi = false;
  bool closed = false;
};

Flow finalize(const Building& b) {
  const PacketRecord& first = *b.packets.front();
  const PacketRecord* opener = &first;
  for (const PacketRecord* p : b.packets) {
    if (p->has(tcp_flag::kSyn) && !p->has(tcp_flag::kAck)) {
      opener = p;
      break;
    }
  }
  Flow flow;
  flow.key.client = {opener->src_ip, opener->src_port};
  flow.key.server = {opener->dst_ip, opener->dst_port};
  for (const PacketRecord* p : b.packets) {
    FlowPacket fp;
    const bool from_client =
        p->src_ip == flow.key.client.ip && p->src_port == flow.key.client.port;
    fp.direction = from_client ? Direction::ClientToServer : Direction::ServerToClient;
    fp.timestamp = p->timestamp;
    fp.tcp_flags = p->tcp_flags;
    fp.payload_len = p->payload_len;
    fp.total_len = p->total_len;
    flow.packets.push_back(fp);
  }
  flow.first_ts = b.packets.front()->timestamp;
  flow.last_ts = b.packets.back()->timestamp;
  return flow;
}

const char* dir_label(Direction d) {
  return d == Direction::ClientToServer ? "C_to_S" : "S_to_C";
}

Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw DataError("bad endpoint: " + s);
  std::string ip = s.substr(0, colon);
  if (ip.size() >= 2 && ip.front() == '[' && ip.back() == ']') {
    ip = ip.substr(1, ip.size() - 2);
  }
  return {ip, static_cast<std::uint16_t>(std::stoul(s.substr(colon + 1)))};
}

}  // namespace

std::string_view to_string(Truth t) {
  switch (t) {
    case Truth::Normal: return "normal";
    case Truth::Attack: return "attack";
    case Truth::Unknown: break;
  }
  return "unknown";
}

Truth parse_truth(std::string_view s) {
  if (s == "normal" || s == "benign" || s == "0") return Truth::Normal;
  if (s == "attack" || s == "malicious" || s == "1") return Truth::Attack;
  if (s.empty() || s == "unknown") return Truth::Unknown;
  throw DataError("unknown truth label: " + std::string(s));
}

std::string Endpoint::str() const {
  if (ip.find(':') != std::string::npos) return "[" + ip + "]:" + std::to_string(port);
  return ip + ":" + std::to_string(port);
}

std::pair<Endpoint, Endpoint> conversation_of(const PacketRecord& p) {
  Endpoint a{p.src_ip, p.src_port};
  Endpoint b{p.dst_ip, p.dst_port};
  if (b < a) std::swap(a, b);
  return {a, b};
}

bool same_conversation(const FlowKey& a, const FlowKey& b) {
  return (a.client == b.client && a.server == b.server) ||
         (a.client == b.server && a.server == b.client);
}

std::vector<Flow> assemble_flows(std::span<const PacketRecord> packets,
                                 const FlowMeterConfig& config) {
  if (!(config.idle_timeout > 0.0)) {
    throw ConfigError("flow idle timeout must be positive");
  }
  std::vector<Building> building;
  std::map<std::pair<Endpoint, Endpoint>, std::size_t> active;
  for (const PacketRecord& p : packets) {
    auto conv = conversation_of(p);
    auto it = active.find(conv);
    if (it != active.end()) {
      const Building& b = building[it->second];
      if (b.closed || p.timestamp - b.packets.back()->timestamp > config.idle_timeout) {
        active.erase(it);
        it = active.end();
      }
    }
    if (it == active.end()) {
      building.emplace_back();
      it = active.emplace(conv, building.size() - 1).first;
    }
    Building& b = building[it->second];
    b.packets.push_back(&p);
    const bool from_lo = Endpoint{p.src_ip, p.src_port} == conv.first;
    if (p.has(tcp_flag::kRst)) {
      b.closed = true;
    } else if (p.has(tcp_flag::kFin)) {
      (from_lo ? b.fin_from_lo : b.fin_from_hi) = true;
    } else if (b.fin_from_lo && b.fin_from_hi && p.has(tcp_flag::kAck)) {
      b.closed = true;
    }
  }
  std::vector<Flow> flows;
  flows.reserve(building.size());
  for (const Building& b : building) flows.push_back(finalize(b));
  std::stable_sort(flows.begin(), flows.end(), [](const Flow& a, const Flow& b) {
    return a.first_ts < b.first_ts;
  });
  for (std::size_t i = 0; i < flows.size(); ++i) {
    flows[i].id = config.id_prefix + std::to_string(i);
    flows[i].features = featurize(flows[i]);
  }
  return flows;
}

std::span<const std::string_view> feature_names() { return kFeatureNames; }
std::size_t feature_count() { return kFeatureNames.size(); }

FeatureVector featurize(const Flow& flow) {
  std::vector<double> len_all, len_fwd, len_bwd, ts_all, ts_fwd, ts_bwd;
  double payload_fwd = 0, payload_bwd = 0, bytes_fwd = 0, bytes_bwd = 0;
  std::array<double, 6> flag_counts{};
  constexpr std::array<std::uint8_t, 6> kFlags = {tcp_flag::kSyn, tcp_flag::kAck,
                                                  tcp_flag::kFin, tcp_flag::kRst,
                                                  tcp_flag::kPsh, tcp_flag::kUrg};
  for (const FlowPacket& p : flow.packets) {
    const double len = p.total_len;
    len_all.push_back(len);
    ts_all.push_back(p.timestamp);
    if (p.direction == Direction::ClientToServer) {
      len_fwd.push_back(len);
      ts_fwd.push_back(p.timestamp);
      payload_fwd += p.payload_len;
      bytes_fwd += len;
    } else {
      len_bwd.push_back(len);
      ts_bwd.push_back(p.timestamp);
      payload_bwd += p.payload_len;
      bytes_bwd += len;
    }
    for (std::size_t f = 0; f < kFlags.size(); ++f) {
      if (p.tcp_flags & kFlags[f]) flag_counts[f] += 1.0;
    }
  }
  const Summary all = summarize(len_all);
  const Summary fwd = summarize(len_fwd);
  const Summary bwd = summarize(len_bwd);
  const Summary iat = summarize(gaps(ts_all));
  const Summary fwd_iat = summarize(gaps(ts_fwd));
  const Summary bwd_iat = summarize(gaps(ts_bwd));

  const double n = static_cast<double>(len_all.size());
  const double bytes = bytes_fwd + bytes_bwd;
  const double duration = std::max(0.0, flow.last_ts - flow.first_ts);

  FeatureVector v;
  v.reserve(kFeatureNames.size());
  v.push_back(duration);
  v.push_back(n);
  v.push_back(static_cast<double>(len_fwd.size()));
  v.push_back(static_cast<double>(len_bwd.size()));
  v.push_back(bytes);
  v.push_back(bytes_fwd);
  v.push_back(bytes_bwd);
  v.push_back(payload_fwd + payload_bwd);
  v.push_back(payload_fwd);
  v.push_back(payload_bwd);
  v.insert(v.end(), flag_counts.begin(), flag_counts.end());
  for (const Summary* s : {&all, &fwd, &bwd}) {
    v.insert(v.end(), {s->mean, s->std, s->min, s->max});
  }
  v.insert(v.end(), {iat.mean, iat.std, iat.min, iat.max});
  v.insert(v.end(), {fwd_iat.mean, fwd_iat.std, bwd_iat.mean, bwd_iat.std});
  v.push_back(duration > 0 ? n / duration : 0.0);
  v.push_back(duration > 0 ? bytes / duration : 0.0);
  v.push_back(len_fwd.empty() ? 0.0
                              : static_cast<double>(len_bwd.size()) /
                                    static_cast<double>(len_fwd.size()));
  v.push_back(n > 0 ? (payload_fwd + payload_bwd) / n : 0.0);
  return v;
}

void write_flows_csv(std::ostream& out, std::span<const Flow> flows) {
  out << "# pmrate-flows v1\n";
  out << "flow_id,client_ip,client_port,server_ip,server_port,first_ts,last_ts,truth";
  for (std::string_view name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (const Flow& f : flows) {
    out << csv::escape(f.id) << ',' << f.key.client.ip << ',' << f.key.client.port
        << ',' << f.key.server.ip << ',' << f.key.server.port << ','
        << csv::format_double(f.first_ts) << ',' << csv::format_double(f.last_ts)
        << ',' << to_string(f.truth);
    const FeatureVector& feats = f.features.empty() ? featurize(f) : f.features;
    for (double x : feats) out << ',' << csv::format_double(x);
    out << '\n';
  }
}

void write_flow_packets(std::ostream& out, std::span<const Flow> flows) {
  out << nlohmann::json{{"schema", "pmrate-flow-packets"}, {"version", 1}}.dump()
      << '\n';
  for (const Flow& f : flows) {
    nlohmann::json pkts = nlohmann::json::array();
    for (const FlowPacket& p : f.packets) {
      pkts.push_back({dir_label(p.direction), tcp_flag::label(p.tcp_flags),
                      p.timestamp, p.payload_len, p.total_len});
    }
    nlohmann::json row = {{"flow_id", f.id},
                          {"client", f.key.client.str()},
                          {"server", f.key.server.str()},
                          {"truth", to_string(f.truth)},
                          {"packets", std::move(pkts)}};
    out << row.dump() << '\n';
  }
}

std::vector<Flow> read_flow_packets(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("flow-packets: empty file");
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("schema", "") != "pmrate-flow-packets") {
    throw DataError("flow-packets: missing schema header");
  }
  if (header.value("version", 0) != 1) {
    throw DataError("flow-packets: unsupported version");
  }
  std::vector<Flow> flows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      Flow f;
      f.id = row.at("flow_id").get<std::string>();
      f.key.client = parse_endpoint(row.at("client").get<std::string>());
      f.key.server = parse_endpoint(row.at("server").get<std::string>());
      f.truth = parse_truth(row.value("truth", "unknown"));
      for (const auto& p : row.at("packets")) {
        FlowPacket fp;
        const auto dir = p.at(0).get<std::string>();
        if (dir != "C_to_S" && dir != "S_to_C") throw DataError("bad direction " + dir);
        fp.direction = dir == "C_to_S" ? Direction::ClientToServer
                                       : Direction::ServerToClient;
        fp.tcp_flags = tcp_flag::parse_label(p.at(1).get<std::string>());
        fp.timestamp = p.at(2).get<double>();
        if (p.size() > 3) fp.payload_len = p.at(3).get<std::uint32_t>();
        if (p.size() > 4) fp.total_len = p.at(4).get<std::uint32_t>();
        f.packets.push_back(fp);
      }
      if (f.packets.empty()) throw DataError("flow without packets");
      f.first_ts = f.packets.front().timestamp;
      f.last_ts = f.packets.back().timestamp;
      f.features = featurize(f);
      flows.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("flow-packets line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("flow-packets line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return flows;
}

void save_corpus(const std::filesystem::path& dir, std::span<const Flow> flows) {
  std::filesystem::create_directories(dir);
  std::ofstream csv_out(dir / "flows.csv");
  std::ofstream pkt_out(dir / "flow_packets.jsonl");
  if (!csv_out || !pkt_out) throw DataError("cannot write corpus to " + dir.string());
  write_flows_csv(csv_out, flows);
  write_flow_packets(pkt_out, flows);
}

std::vector<Flow> load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "flow_packets.jsonl");
  if (!in) throw DataError("missing " + (dir / "flow_packets.jsonl").string());
  return read_flow_packets(in);
}

}  // namespace pmrate
