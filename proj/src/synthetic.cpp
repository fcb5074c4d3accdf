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

#include "pmrate/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "pmrate/error.hpp"

namespace pmrate {

namespace {

using namespace tcp_flag;

constexpr std::uint32_t kIpTcpHeader = 52;  // IPv4 + TCP with timestamps option
constexpr std::uint32_t kSynLen = 60;
constexpr std::uint32_t kMss = 1448;

class FlowWriter {
 public:
  FlowWriter(Flow& flow, double t0) : flow_(flow), t_(t0) {}

  void c(std::uint8_t flags, std::uint32_t payload = 0) { emit(Direction::ClientToServer, flags, payload); }
  void s(std::uint8_t flags, std::uint32_t payload = 0) { emit(Direction::ServerToClient, flags, payload); }
  void wait(double dt) { t_ += dt; }

 private:
  void emit(Direction d, std::uint8_t flags, std::uint32_t payload) {
    const std::uint32_t header = (flags & kSyn) ? kSynLen : kIpTcpHeader;
    flow_.packets.push_back({d, t_, flags, payload, header + payload});
  }

  Flow& flow_;
  double t_;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void normal_flow(FlowWriter& w, std::mt19937_64& rng) {
  const double rtt = uniform(rng, 0.005, 0.08);
  w.c(kSyn);
  w.wait(rtt / 2);
  w.s(kSyn | kAck);
  w.wait(rtt / 2);
  w.c(kAck);

  const int requests = uniform_int(rng, 1, 4);
  for (int r = 0; r < requests; ++r) {
    w.wait(r == 0 ? 0.001 : uniform(rng, 5.0, 45.0));
    w.c(kAck | kPsh, static_cast<std::uint32_t>(uniform_int(rng, 250, 400)));
    w.wait(rtt / 2);
    const int segments = uniform_int(rng, 20, 100);
    for (int i = 1; i <= segments; ++i) {
      if (i == segments) {
        w.s(kAck | kPsh, static_cast<std::uint32_t>(uniform_int(rng, 200, kMss)));
      } else {
        w.s(kAck, kMss);
      }
      w.wait(0.001);
      if (i % 4 == 0 || i == segments) w.c(kAck);
    }
  }

  w.wait(uniform(rng, 1.0, 20.0));
  if (uniform(rng, 0, 1) < 0.02) {
    w.c(kAck | kRst);
    return;
  }
  w.c(kFin | kAck);
  w.wait(rtt / 2);
  w.s(kFin | kAck);
  w.wait(rtt / 2);
  w.c(kAck);
}

void slowloris_flow(FlowWriter& w, std::mt19937_64& rng) {
  const double rtt = uniform(rng, 0.005, 0.08);
  w.c(kSyn);
  w.wait(rtt / 2);
  w.s(kSyn | kAck);
  w.wait(rtt / 2);
  w.c(kAck);

  // Partial request headers, one small segment every few seconds.
  const int trickle = uniform_int(rng, 3, 5);
  for (int i = 0; i < trickle; ++i) {
    w.wait(uniform(rng, 5.0, 12.0));
    w.c(kAck | kPsh, static_cast<std::uint32_t>(uniform_int(rng, 35, 65)));
    w.wait(rtt / 2);
    w.s(kAck);
  }

  w.wait(uniform(rng, 5.0, 12.0));
  w.c(kFin | kAck);
  w.wait(rtt / 2);
  if (uniform(rng, 0, 1) < 0.8) {
    w.s(kAck);
    w.wait(0.001);
    w.s(kAck | kRst);
    return;
  }
  w.s(kFin | kAck);
  w.wait(rtt / 2);
  w.c(kAck);
}

}  // namespace

std::string_view to_string(TrafficProfile p) { return p == TrafficProfile::Normal ? "normal" : "slowloris"; }

TrafficProfile parse_profile(std::string_view name) {
  if (name == "normal") return TrafficProfile::Normal;
  if (name == "slowloris") return TrafficProfile::Slowloris;
  throw ConfigError("unknown traffic profile " + std::string(name) + " (normal, slowloris)");
}

std::vector<Flow> generate_flows(TrafficProfile profile, std::size_t n, std::uint64_t seed,
                                 const SyntheticOptions& options) {
  if (n == 0) throw ConfigError("flow count must be at least 1");
  if (n + options.first_index > 60000) throw ConfigError("at most 60000 synthetic flows per profile");
  std::mt19937_64 rng(seed);
  const bool normal = profile == TrafficProfile::Normal;
  std::vector<Flow> flows;
  flows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t index = options.first_index + i;
    Flow f;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%06zu", normal ? "nor" : "gsl", index);
    f.id = id;
    // One client address per 250 flows, one source port per flow.
    char ip[32];
    std::snprintf(ip, sizeof ip, "10.%d.%zu.%zu", normal ? 1 : 66, index / 250 / 250 % 250, index / 250 % 250 + 1);
    f.key.client = {ip, static_cast<std::uint16_t>(1024 + index % 250 * 200)};
    f.key.server = {"192.168.10.5", 80};
    f.truth = normal ? Truth::Normal : Truth::Attack;
    FlowWriter w(f, options.start_time + uniform(rng, 0.0, options.spread));
    if (normal) {
      normal_flow(w, rng);
    } else {
      slowloris_flow(w, rng);
    }
    f.first_ts = f.packets.front().timestamp;
    f.last_ts = f.packets.back().timestamp;
    f.features = featurize(f);
    flows.push_back(std::move(f));
  }
  return flows;
}

std::vector<PacketRecord> to_packets(std::span<const Flow> flows) {
  std::vector<PacketRecord> out;
  for (const Flow& f : flows) {
    for (const FlowPacket& p : f.packets) {
      const bool fwd = p.direction == Direction::ClientToServer;
      const Endpoint& src = fwd ? f.key.client : f.key.server;
      const Endpoint& dst = fwd ? f.key.server : f.key.client;
      out.push_back({p.timestamp, src.ip, dst.ip, src.port, dst.port, p.tcp_flags, p.payload_len, p.total_len});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

}  // namespace pmrate
