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

#include <doctest.h>

#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "pmrate/error.hpp"
#include "pmrate/events.hpp"

using namespace pmrate;

namespace {

Flow flow_of(std::vector<std::pair<Direction, std::uint8_t>> pkts) {
  Flow f;
  f.id = "f";
  double ts = 0.0;
  for (auto [d, flags] : pkts) f.packets.push_back({d, ts += 1.0, flags, 0, 40});
  return f;
}

constexpr auto C = Direction::ClientToServer;
constexpr auto S = Direction::ServerToClient;

// Minimum within-cluster sum of squares over all 2-partitions (oracle).
double brute_force_two_partition(const std::vector<std::vector<double>>& pts,
                                 std::vector<int>* best_labels) {
  const std::size_t n = pts.size();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    if (mask & 1u) continue;  // fix point 0 in group 0 to skip mirror images
    double wcss = 0.0;
    for (int g = 0; g < 2; ++g) {
      std::vector<double> mean(pts[0].size(), 0.0);
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != unsigned(g)) continue;
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += pts[i][j];
        ++count;
      }
      for (double& m : mean) m /= count;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != unsigned(g)) continue;
        for (std::size_t j = 0; j < mean.size(); ++j) {
          wcss += (pts[i][j] - mean[j]) * (pts[i][j] - mean[j]);
        }
      }
    }
    if (wcss < best - 1e-12) {
      best = wcss;
      if (best_labels) {
        best_labels->assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) (*best_labels)[i] = int((mask >> i) & 1u);
      }
    }
  }
  return best;
}

bool same_partition(const std::vector<int>& a, const std::vector<std::size_t>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

Trace make_trace(std::string id, std::vector<std::string> events) {
  return {std::move(id), std::move(events)};
}

}  // namespace

TEST_CASE("event labels") {
  const auto hs = to_trace(flow_of({{C, tcp_flag::kSyn},
                                    {S, tcp_flag::kSyn | tcp_flag::kAck},
                                    {C, tcp_flag::kAck}}));
  CHECK(hs.events == std::vector<std::string>{"C_to_S_SYN", "S_to_C_SYN+ACK", "C_to_S_ACK"});
  CHECK(to_trace(flow_of({{S, tcp_flag::kPsh | tcp_flag::kAck}})).events[0] ==
        "S_to_C_ACK+PSH");
  CHECK(to_trace(flow_of({{C, 0}})).events[0] == "C_to_S_NONE");
}

TEST_CASE("property: label construction is a bijection") {
  std::set<std::string> seen;
  for (auto d : {C, S}) {
    for (unsigned bits = 0; bits < 256; ++bits) {
      const auto flags = static_cast<std::uint8_t>(bits & tcp_flag::kTracked);
      if (flags != bits) continue;
      const TcpEventType t{d, flags};
      const auto label = t.label();
      CHECK(TcpEventType::parse(label) == t);
      seen.insert(label);
    }
  }
  CHECK(seen.size() == 128);
  CHECK_THROWS_AS(TcpEventType::parse("X_to_Y_SYN"), DataError);
}

TEST_CASE("k-means on six 2-D count vectors matches the brute-force partition") {
  const std::vector<std::vector<double>> pts = {{0, 3}, {1, 2}, {0, 2}, {3, 0}, {2, 1}, {3, 1}};
  const std::vector<double> w(pts.size(), 1.0);
  std::vector<int> oracle;
  const double best = brute_force_two_partition(pts, &oracle);
  const auto r = kmeans(pts, w, 2, 17);
  CHECK(r.inertia == doctest::Approx(best).epsilon(1e-12));
  CHECK(same_partition(oracle, r.assignment));
}

TEST_CASE("property: k-means reaches the brute-force optimum on small point sets") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 40; ++round) {
    std::set<std::vector<double>> uniq;
    while (uniq.size() < 6) {
      uniq.insert({double(rng() % 4), double(rng() % 4)});
    }
    const std::vector<std::vector<double>> pts(uniq.begin(), uniq.end());
    const double best = brute_force_two_partition(pts, nullptr);
    const auto r = kmeans(pts, std::vector<double>(6, 1.0), 2, rng());
    CHECK(r.inertia == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("k-means preconditions and determinism") {
  const std::vector<std::vector<double>> dup = {{1, 0}, {1, 0}, {1, 0}};
  CHECK_THROWS_AS(kmeans(dup, std::vector<double>(3, 1.0), 2, 0), ConfigError);
  const std::vector<std::vector<double>> pts = {{0, 0}, {0, 1}, {5, 5}, {6, 5}, {9, 0}};
  const std::vector<double> w(5, 1.0);
  const auto a = kmeans(pts, w, 3, 99);
  const auto b = kmeans(pts, w, 3, 99);
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignment == b.assignment);
  CHECK(std::is_sorted(a.centroids.begin(), a.centroids.end()));
}

TEST_CASE("well-separated window populations split into two states") {
  std::vector<Trace> traces;
  for (int i = 0; i < 10; ++i) {
    traces.push_back(make_trace("a" + std::to_string(i), {"C_to_S_SYN", "C_to_S_SYN", "C_to_S_SYN"}));
    traces.push_back(make_trace("b" + std::to_string(i), {"S_to_C_ACK", "S_to_C_ACK", "S_to_C_ACK"}));
  }
  ExtractionParams p;
  p.k = 2;
  p.window = 3;
  p = fit_states(traces, p);
  REQUIRE(p.centroids.size() == 2);
  const auto sa = event_states(traces[0], p);
  const auto sb = event_states(traces[1], p);
  CHECK(sa[0] != sb[0]);
  for (std::size_t i = 0; i < traces.size(); i += 2) {
    CHECK(event_states(traces[i], p)[0] == sa[0]);
    CHECK(event_states(traces[i + 1], p)[0] == sb[0]);
  }
}

TEST_CASE("k = 1 keeps every trace whole") {
  const std::vector<Trace> traces = {make_trace("x", {"C_to_S_SYN", "S_to_C_SYN+ACK", "C_to_S_ACK", "C_to_S_FIN"}),
                                     make_trace("y", {"C_to_S_ACK"})};
  ExtractionParams p;
  p.k = 1;
  p = fit_states(traces, p);
  const auto logs = build_logs(std::span<const Trace>(traces), p);
  REQUIRE(logs.size() == 1);
  REQUIRE(logs[0].fragments.size() == 2);
  CHECK(logs[0].fragments[0].events == traces[0].events);
  CHECK(logs[0].fragments[1].events == traces[1].events);
}

TEST_CASE("too few distinct windows for k") {
  const std::vector<Trace> traces = {make_trace("x", {"C_to_S_ACK", "C_to_S_ACK", "C_to_S_ACK"})};
  ExtractionParams p;
  p.k = 2;
  CHECK_THROWS_AS(fit_states(traces, p), ConfigError);
}

TEST_CASE("run-length splitting") {
  ExtractionParams p;
  p.k = 2;
  p.window = 1;
  p.alphabet = {"a", "b"};
  p.centroids = {{1, 0}, {0, 1}};
  const auto frags = split_by_state(make_trace("t", {"a", "a", "b", "b", "a"}), p);
  REQUIRE(frags.size() == 3);
  CHECK(frags[0].state == 0);
  CHECK(frags[0].events == std::vector<std::string>{"a", "a"});
  CHECK(frags[1].state == 1);
  CHECK(frags[1].offset == 2);
  CHECK(frags[1].events == std::vector<std::string>{"b", "b"});
  CHECK(frags[2].state == 0);
  CHECK(frags[2].events == std::vector<std::string>{"a"});

  const auto whole = split_by_state(make_trace("t", {"a", "a", "a"}), p);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].events.size() == 3);
}

TEST_CASE("trailing events take the last window's state") {
  ExtractionParams p;
  p.k = 2;
  p.window = 3;
  p.alphabet = {"a", "b"};
  p.centroids = {{3, 0}, {0, 3}};
  // Windows: [a a a]->0, [a a b]->0, [a b b]->1. Events 3 and 4 follow window 2.
  const auto states = event_states(make_trace("t", {"a", "a", "a", "b", "b"}), p);
  CHECK(states == std::vector<StateId>{0, 0, 1, 1, 1});
  // Shorter than the window: one window over the whole trace.
  CHECK(event_states(make_trace("t", {"b", "b"}), p) == std::vector<StateId>{1, 1});
  // Tie between centroids goes to the lowest id.
  ExtractionParams tie = p;
  tie.window = 1;
  tie.centroids = {{1, 0}, {0, 1}};
  CHECK(nearest_state(tie, {0.5, 0.5}) == 0);
}

TEST_CASE("property: fragments reassemble every trace") {
  std::mt19937_64 rng(23);
  const std::vector<std::string> alphabet = {"C_to_S_ACK", "C_to_S_ACK+PSH", "S_to_C_ACK",
                                             "S_to_C_ACK+PSH", "C_to_S_FIN+ACK"};
  std::vector<Trace> traces;
  for (int i = 0; i < 100; ++i) {
    Trace t{"t" + std::to_string(i), {}};
    const std::size_t len = 1 + rng() % 15;
    for (std::size_t j = 0; j < len; ++j) t.events.push_back(alphabet[rng() % alphabet.size()]);
    traces.push_back(std::move(t));
  }
  for (std::size_t k : {1u, 2u, 3u}) {
    for (std::size_t w : {1u, 3u, 5u}) {
      ExtractionParams p;
      p.k = k;
      p.window = w;
      p.seed = rng();
      p = fit_states(traces, p);
      const auto logs = build_logs(std::span<const Trace>(traces), p);
      CHECK(logs.size() == k);
      for (const Trace& t : traces) {
        std::vector<std::string> rebuilt;
        std::size_t expected_offset = 0;
        const auto frags = split_by_state(t, p);
        for (const Fragment& f : frags) {
          CHECK(f.offset == expected_offset);
          CHECK_FALSE(f.events.empty());
          rebuilt.insert(rebuilt.end(), f.events.begin(), f.events.end());
          expected_offset += f.events.size();
        }
        CHECK(rebuilt == t.events);
        for (std::size_t i = 1; i < frags.size(); ++i) CHECK(frags[i].state != frags[i - 1].state);
      }
      // build_logs groups exactly the per-trace fragments.
      std::size_t from_logs = 0, from_split = 0;
      for (const auto& log : logs) {
        for (const auto& f : log.fragments) CHECK(f.state == log.state);
        from_logs += log.fragments.size();
      }
      for (const Trace& t : traces) from_split += split_by_state(t, p).size();
      CHECK(from_logs == from_split);
    }
  }
}

TEST_CASE("unseen labels contribute nothing and are reported") {
  ExtractionParams p;
  p.k = 1;
  p.window = 2;
  p.alphabet = {"C_to_S_ACK", "S_to_C_ACK"};
  p.centroids = {{1, 1}};
  const std::vector<std::string> window = {"C_to_S_ACK", "C_to_S_RST"};
  CHECK(window_vector(p, window) == std::vector<double>{1, 0});
  const auto unseen = unseen_labels(make_trace("t", {"C_to_S_RST", "C_to_S_ACK", "C_to_S_RST"}), p);
  CHECK(unseen == std::vector<std::string>{"C_to_S_RST"});
}

TEST_CASE("params, XES and JSON-lines persistence") {
  std::vector<Trace> traces = {make_trace("f&1", {"C_to_S_SYN", "S_to_C_SYN+ACK", "C_to_S_ACK", "S_to_C_ACK+PSH"}),
                               make_trace("f2", {"C_to_S_ACK+PSH", "S_to_C_ACK", "C_to_S_ACK+PSH"})};
  ExtractionParams p;
  p.k = 2;
  p.window = 2;
  p.seed = 4;
  p = fit_states(traces, p);

  std::stringstream ps;
  save_params(ps, p);
  const auto back = load_params(ps);
  CHECK(back.alphabet == p.alphabet);
  CHECK(back.centroids == p.centroids);
  CHECK(back.window == p.window);

  const auto logs = build_logs(std::span<const Trace>(traces), p);
  for (const auto& log : logs) {
    std::stringstream xs;
    write_xes(xs, log);
    const auto parsed = read_xes(xs);
    CHECK(parsed.state == log.state);
    REQUIRE(parsed.fragments.size() == log.fragments.size());
    for (std::size_t i = 0; i < log.fragments.size(); ++i) {
      CHECK(parsed.fragments[i].flow_id == log.fragments[i].flow_id);
      CHECK(parsed.fragments[i].offset == log.fragments[i].offset);
      CHECK(parsed.fragments[i].events == log.fragments[i].events);
    }
  }
  std::stringstream js;
  write_logs_jsonl(js, logs);
  const auto jl = read_logs_jsonl(js, 2);
  for (std::size_t s = 0; s < 2; ++s) CHECK(jl[s].fragments.size() == logs[s].fragments.size());

  std::istringstream bad("<notlog/>");
  CHECK_THROWS_AS(read_xes(bad), DataError);
}
