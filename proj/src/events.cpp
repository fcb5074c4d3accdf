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

#include "pmrate/events.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "pmrate/error.hpp"
#include "pmrate/xml.hpp"

namespace pmrate {
namespace {

constexpr std::size_t kRestarts = 10;
constexpr std::size_t kMaxLloydIterations = 300;

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Uniform double in [0, 1) from the raw engine output, so sampling does not
// depend on the standard library's distribution implementations.
double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample(std::mt19937_64& rng, const std::vector<double>& mass) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  double u = unit(rng) * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0.0) continue;
    last_positive = i;
    if (u < mass[i]) return i;
    u -= mass[i];
  }
  return last_positive;
}

std::size_t nearest(const std::vector<std::vector<double>>& centroids,
                    const std::vector<double>& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Single-point moves that lower the weighted within-cluster sum of squares,
// applied until none is left. Escapes Lloyd fixed points that are not local
// optima under reassignment of one point.
void hartigan_refine(const std::vector<std::vector<double>>& points,
                     std::span<const double> weights, KMeansResult& r) {
  const std::size_t k = r.centroids.size();
  const std::size_t dim = points.front().size();
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) mass[r.assignment[i]] += weights[i];
  for (std::size_t round = 0; round < kMaxLloydIterations; ++round) {
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t from = r.assignment[i];
      const double w = weights[i];
      if (mass[from] - w <= 0.0) continue;
      const double loss = w * mass[from] / (mass[from] - w) * sq_dist(points[i], r.centroids[from]);
      std::size_t to = from;
      double best_gain = 1e-12;
      for (std::size_t c = 0; c < k; ++c) {
        if (c == from) continue;
        const double cost = w * mass[c] / (mass[c] + w) * sq_dist(points[i], r.centroids[c]);
        if (loss - cost > best_gain) {
          best_gain = loss - cost;
          to = c;
        }
      }
      if (to == from) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        r.centroids[from][j] = (r.centroids[from][j] * mass[from] - w * points[i][j]) / (mass[from] - w);
        r.centroids[to][j] = (r.centroids[to][j] * mass[to] + w * points[i][j]) / (mass[to] + w);
      }
      mass[from] -= w;
      mass[to] += w;
      r.assignment[i] = to;
      moved = true;
    }
    if (!moved) break;
  }
}

KMeansResult lloyd_run(const std::vector<std::vector<double>>& points,
                       std::span<const double> weights, std::size_t k,
                       std::mt19937_64& rng) {
  const std::size_t n = points.size();
  KMeansResult r;
  // k-means++ seeding.
  std::vector<double> mass(weights.begin(), weights.end());
  r.centroids.push_back(points[sample(rng, mass)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) best = std::min(best, sq_dist(c, points[i]));
      d2[i] = best * weights[i];
    }
    r.centroids.push_back(points[sample(rng, d2)]);
  }

  r.assignment.assign(n, k);
  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(r.centroids, points[i]);
      if (c != r.assignment[i]) {
        r.assignment[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    const std::size_t dim = points.front().size();
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<double> totals(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = r.assignment[i];
      totals[c] += weights[i];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += weights[i] * points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (totals[c] > 0.0) {
        for (double& v : sums[c]) v /= totals[c];
        r.centroids[c] = std::move(sums[c]);
      } else {
        // Empty cluster: move it to the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(points[i], r.centroids[r.assignment[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        r.centroids[c] = points[far];
      }
    }
  }
  hartigan_refine(points, weights, r);
  for (std::size_t i = 0; i < n; ++i) {
    r.inertia += weights[i] * sq_dist(points[i], r.centroids[r.assignment[i]]);
  }
  return r;
}

void canonicalize(KMeansResult& r) {
  std::vector<std::size_t> order(r.centroids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return r.centroids[a] < r.centroids[b]; });
  std::vector<std::size_t> rank(order.size());
  std::vector<std::vector<double>> sorted;
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[order[i]] = i;
    sorted.push_back(r.centroids[order[i]]);
  }
  r.centroids = std::move(sorted);
  for (auto& a : r.assignment) a = rank[a];
}

bool distinct_centroids(const KMeansResult& r) {
  for (std::size_t i = 1; i < r.centroids.size(); ++i) {
    if (r.centroids[i] == r.centroids[i - 1]) return false;
  }
  return true;
}

}  // namespace

std::string TcpEventType::label() const {
  return std::string(direction == Direction::ClientToServer ? "C_to_S_" : "S_to_C_") +
         tcp_flag::label(flags);
}

TcpEventType TcpEventType::parse(std::string_view label) {
  TcpEventType t;
  if (label.starts_with("C_to_S_")) {
    t.direction = Direction::ClientToServer;
  } else if (label.starts_with("S_to_C_")) {
    t.direction = Direction::ServerToClient;
  } else {
    throw DataError("bad TCP event label: " + std::string(label));
  }
  t.flags = tcp_flag::parse_label(label.substr(7));
  return t;
}

Trace to_trace(const Flow& flow) {
  Trace t;
  t.flow_id = flow.id;
  t.events.reserve(flow.packets.size());
  for (const FlowPacket& p : flow.packets) {
    t.events.push_back(TcpEventType{p.direction, p.tcp_flags}.label());
  }
  return t;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points,
                    std::span<const double> weights, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("cluster count k must be at least 1");
  if (weights.size() != points.size()) throw DataError("kmeans: weight count mismatch");
  std::set<std::vector<double>> distinct(points.begin(), points.end());
  if (distinct.size() < k) {
    throw ConfigError("only " + std::to_string(distinct.size()) +
                      " distinct window vectors for k=" + std::to_string(k) +
                      "; use a smaller k");
  }
  std::optional<KMeansResult> best;
  for (std::size_t restart = 0; restart < kRestarts; ++restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::mt19937_64 rng(seq);
    KMeansResult r = lloyd_run(points, weights, k, rng);
    canonicalize(r);
    if (!distinct_centroids(r)) continue;
    if (!best || r.inertia < best->inertia - 1e-12) best = std::move(r);
  }
  if (!best) throw DataError("kmeans: every restart collapsed two centroids");
  return *best;
}

std::vector<std::span<const EventLabel>> windows(std::span<const EventLabel> events,
                                                 std::size_t window) {
  std::vector<std::span<const EventLabel>> out;
  if (events.empty()) return out;
  if (events.size() <= window) {
    out.push_back(events);
    return out;
  }
  for (std::size_t i = 0; i + window <= events.size(); ++i) {
    out.push_back(events.subspan(i, window));
  }
  return out;
}

std::vector<double> window_vector(const ExtractionParams& params,
                                  std::span<const EventLabel> window) {
  std::vector<double> v(params.alphabet.size(), 0.0);
  for (const EventLabel& e : window) {
    const auto it = std::lower_bound(params.alphabet.begin(), params.alphabet.end(), e);
    if (it != params.alphabet.end() && *it == e) {
      v[static_cast<std::size_t>(it - params.alphabet.begin())] += 1.0;
    }
  }
  return v;
}

ExtractionParams fit_states(std::span<const Trace> traces, ExtractionParams params) {
  if (params.k < 1 || params.window < 1) {
    throw ConfigError("extraction parameters need k >= 1 and window >= 1");
  }
  std::set<EventLabel> alphabet;
  for (const Trace& t : traces) alphabet.insert(t.events.begin(), t.events.end());
  params.alphabet.assign(alphabet.begin(), alphabet.end());
  params.centroids.clear();

  std::map<std::vector<double>, double> counts;
  for (const Trace& t : traces) {
    for (const auto& w : windows(t.events, params.window)) {
      counts[window_vector(params, w)] += 1.0;
    }
  }
  if (counts.empty()) throw DataError("no events to cluster");
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
  for (auto& [p, w] : counts) {
    points.push_back(p);
    weights.push_back(w);
  }
  params.centroids = kmeans(points, weights, params.k, params.seed).centroids;
  return params;
}

StateId nearest_state(const ExtractionParams& params, const std::vector<double>& v) {
  if (!params.fitted()) throw ConfigError("extraction parameters are not fitted");
  return nearest(params.centroids, v);
}

std::vector<StateId> event_states(const Trace& trace, const ExtractionParams& params) {
  const auto ws = windows(trace.events, params.window);
  std::vector<StateId> states(trace.events.size(), 0);
  if (ws.empty()) return states;
  std::vector<StateId> window_states;
  window_states.reserve(ws.size());
  for (const auto& w : ws) window_states.push_back(nearest_state(params, window_vector(params, w)));
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i] = window_states[std::min(i, window_states.size() - 1)];
  }
  return states;
}

std::vector<Fragment> split_by_state(const Trace& trace, const ExtractionParams& params) {
  const auto states = event_states(trace, params);
  std::vector<Fragment> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (out.empty() || out.back().state != states[i]) {
      out.push_back({trace.flow_id, states[i], i, {}});
    }
    out.back().events.push_back(trace.events[i]);
  }
  return out;
}

std::vector<EventLabel> unseen_labels(const Trace& trace, const ExtractionParams& params) {
  std::vector<EventLabel> out;
  for (const EventLabel& e : trace.events) {
    if (!std::binary_search(params.alphabet.begin(), params.alphabet.end(), e) &&
        std::find(out.begin(), out.end(), e) == out.end()) {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<StateEventLog> build_logs(std::span<const Trace> traces,
                                      const ExtractionParams& params) {
  std::vector<StateEventLog> logs(params.centroids.size());
  for (std::size_t s = 0; s < logs.size(); ++s) logs[s].state = s;
  for (const Trace& t : traces) {
    for (Fragment& f : split_by_state(t, params)) {
      logs[f.state].fragments.push_back(std::move(f));
    }
  }
  return logs;
}

std::vector<StateEventLog> build_logs(std::span<const Flow> flows,
                                      const ExtractionParams& params) {
  std::vector<Trace> traces;
  traces.reserve(flows.size());
  for (const Flow& f : flows) traces.push_back(to_trace(f));
  return build_logs(std::span<const Trace>(traces), params);
}

void save_params(std::ostream& out, const ExtractionParams& p) {
  nlohmann::json j = {{"schema", "pmrate-extraction"},
                      {"version", 1},
                      {"k", p.k},
                      {"window", p.window},
                      {"seed", p.seed},
                      {"alphabet", p.alphabet},
                      {"centroids", p.centroids}};
  out << j.dump(1) << '\n';
}

ExtractionParams load_params(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("schema", "") != "pmrate-extraction" || j.value("version", 0) != 1) {
      throw DataError("not a pmrate-extraction v1 file");
    }
    ExtractionParams p;
    p.k = j.at("k").get<std::size_t>();
    p.window = j.at("window").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.alphabet = j.at("alphabet").get<std::vector<EventLabel>>();
    p.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    if (!std::is_sorted(p.alphabet.begin(), p.alphabet.end())) {
      throw DataError("extraction alphabet must be sorted");
    }
    for (const auto& c : p.centroids) {
      if (c.size() != p.alphabet.size()) throw DataError("centroid dimension mismatch");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("extraction params: ") + e.what());
  }
}

void write_xes(std::ostream& out, const StateEventLog& log) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<log xes.version=\"1.0\" xes.features=\"\" xmlns=\"http://www.xes-standard.org/\">\n"
      << "  <extension name=\"Concept\" prefix=\"concept\" "
         "uri=\"http://www.xes-standard.org/concept.xesext\"/>\n"
      << "  <global scope=\"event\">\n"
      << "    <string key=\"concept:name\" value=\"__INVALID__\"/>\n"
      << "  </global>\n"
      << "  <string key=\"concept:name\" value=\"state_" << log.state << "\"/>\n"
      << "  <int key=\"pmrate:state\" value=\"" << log.state << "\"/>\n";
  for (const Fragment& f : log.fragments) {
    out << "  <trace>\n"
        << "    <string key=\"concept:name\" value=\"" << xml::escape(f.flow_id) << "\"/>\n"
        << "    <int key=\"pmrate:offset\" value=\"" << f.offset << "\"/>\n";
    for (const EventLabel& e : f.events) {
      out << "    <event><string key=\"concept:name\" value=\"" << xml::escape(e)
          << "\"/></event>\n";
    }
    out << "  </trace>\n";
  }
  out << "</log>\n";
}

StateEventLog read_xes(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("XES: ") + e.what());
  }
  const auto log_node = tree.get_child_optional("log");
  if (!log_node) throw DataError("XES: missing <log> element");
  StateEventLog log;
  auto attr = [](const pt::ptree& node, const std::string& key) -> std::optional<std::string> {
    for (const auto& [tag, child] : node) {
      if ((tag == "string" || tag == "int") && child.get<std::string>("<xmlattr>.key", "") == key) {
        return child.get<std::string>("<xmlattr>.value");
      }
    }
    return std::nullopt;
  };
  if (auto s = attr(*log_node, "pmrate:state")) log.state = std::stoul(*s);
  for (const auto& [tag, trace] : *log_node) {
    if (tag != "trace") continue;
    Fragment f;
    f.state = log.state;
    f.flow_id = attr(trace, "concept:name").value_or("");
    if (auto off = attr(trace, "pmrate:offset")) f.offset = std::stoul(*off);
    for (const auto& [etag, event] : trace) {
      if (etag != "event") continue;
      auto name = attr(event, "concept:name");
      if (!name) throw DataError("XES: event without concept:name");
      f.events.push_back(*name);
    }
    log.fragments.push_back(std::move(f));
  }
  return log;
}

void write_logs_jsonl(std::ostream& out, std::span<const StateEventLog> logs) {
  for (const StateEventLog& log : logs) {
    for (const Fragment& f : log.fragments) {
      out << nlohmann::json{{"state", f.state},
                            {"flow_id", f.flow_id},
                            {"offset", f.offset},
                            {"events", f.events}}
                 .dump()
          << '\n';
    }
  }
}

std::vector<StateEventLog> read_logs_jsonl(std::istream& in, std::size_t k) {
  std::vector<StateEventLog> logs(k);
  for (std::size_t s = 0; s < k; ++s) logs[s].state = s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Fragment f;
      f.state = j.at("state").get<StateId>();
      f.flow_id = j.at("flow_id").get<std::string>();
      f.offset = j.at("offset").get<std::size_t>();
      f.events = j.at("events").get<std::vector<EventLabel>>();
      if (f.state >= k) throw DataError("fragment state out of range");
      logs[f.state].fragments.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("event log JSON-lines: ") + e.what());
    }
  }
  return logs;
}

}  // namespace pmrate
