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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmrate/flow.hpp"

namespace pmrate {

/// One TCP event type: packet direction plus the set of tracked flags.
struct TcpEventType {
  Direction direction = Direction::ClientToServer;
  std::uint8_t flags = 0;

  /// e.g. "C_to_S_SYN", "S_to_C_ACK+PSH", "C_to_S_NONE".
  std::string label() const;
  static TcpEventType parse(std::string_view label);

  friend bool operator==(const TcpEventType&, const TcpEventType&) = default;
};

using EventLabel = std::string;

struct Trace {
  std::string flow_id;
  std::vector<EventLabel> events;
};

/// One event per packet, in packet order.
Trace to_trace(const Flow& flow);

using StateId = std::size_t;

/// Clustering parameters for state discovery. Centroids live in the window
/// count space indexed by `alphabet`.
struct ExtractionParams {
  std::size_t k = 2;
  std::size_t window = 3;
  std::uint64_t seed = 0;
  std::vector<EventLabel> alphabet;
  std::vector<std::vector<double>> centroids;

  bool fitted() const { return !centroids.empty(); }
};

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
};

/// Weighted k-means with k-means++ seeding and Lloyd iterations (at most 300
/// per restart). Runs several seeded restarts and keeps the lowest inertia.
/// Centroids are returned in lexicographic order. Requires at least k
/// distinct points.
KMeansResult kmeans(const std::vector<std::vector<double>>& points,
                    std::span<const double> weights, std::size_t k, std::uint64_t seed);

/// Sliding windows (stride 1) over a trace. A trace shorter than the window
/// yields one window covering the whole trace.
std::vector<std::span<const EventLabel>> windows(std::span<const EventLabel> events,
                                                 std::size_t window);

/// Per-label counts over the fitted alphabet. Labels outside the alphabet
/// contribute nothing.
std::vector<double> window_vector(const ExtractionParams& params,
                                  std::span<const EventLabel> window);

ExtractionParams fit_states(std::span<const Trace> traces, ExtractionParams params);

/// Nearest centroid, ties to the lowest state id.
StateId nearest_state(const ExtractionParams& params, const std::vector<double>& v);

/// State of every event: the state of the window starting at that event; the
/// trailing events take the state of the last window.
std::vector<StateId> event_states(const Trace& trace, const ExtractionParams& params);

/// A contiguous piece of one source trace that stays in a single state.
struct Fragment {
  std::string flow_id;
  StateId state = 0;
  std::size_t offset = 0;  // index of the first event in the source trace
  std::vector<EventLabel> events;
};

std::vector<Fragment> split_by_state(const Trace& trace, const ExtractionParams& params);

/// Labels of `trace` missing from the fitted alphabet, in first-seen order.
std::vector<EventLabel> unseen_labels(const Trace& trace, const ExtractionParams& params);

struct StateEventLog {
  StateId state = 0;
  std::vector<Fragment> fragments;
};

/// One log per state (empty states keep an empty log), fragments in input
/// trace order.
std::vector<StateEventLog> build_logs(std::span<const Trace> traces,
                                      const ExtractionParams& params);
std::vector<StateEventLog> build_logs(std::span<const Flow> flows,
                                      const ExtractionParams& params);

// Persistence. Params as JSON ({"schema":"pmrate-extraction","version":1}).
// Logs as XES (one file per state) and as a JSON-lines mirror with one
// fragment per line: {"state","flow_id","offset","events"}.
void save_params(std::ostream& out, const ExtractionParams& params);
ExtractionParams load_params(std::istream& in);
void write_xes(std::ostream& out, const StateEventLog& log);
StateEventLog read_xes(std::istream& in);
void write_logs_jsonl(std::ostream& out, std::span<const StateEventLog> logs);
std::vector<StateEventLog> read_logs_jsonl(std::istream& in, std::size_t k);

}  // namespace pmrate
