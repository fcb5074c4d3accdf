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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pmrate/events.hpp"

namespace pmrate {

using PlaceId = std::size_t;
using TransitionId = std::size_t;

/// Token counts indexed by place.
struct Marking {
  std::vector<std::uint32_t> tokens;

  std::uint64_t total() const;
  friend bool operator==(const Marking&, const Marking&) = default;
  friend auto operator<=>(const Marking&, const Marking&) = default;
};

struct MarkingHash {
  std::size_t operator()(const Marking& m) const noexcept;
};

struct Place {
  std::string name;
};

struct Transition {
  std::string name;
  std::optional<EventLabel> label;  // empty for silent (tau) transitions
  std::vector<PlaceId> inputs;
  std::vector<PlaceId> outputs;

  bool silent() const { return !label.has_value(); }
};

/// Place/transition net with unit arc weights and an initial and final
/// marking.
class PetriNet {
 public:
  PlaceId add_place(std::string name);
  TransitionId add_transition(std::string name, std::optional<EventLabel> label);
  void add_input_arc(PlaceId from, TransitionId to);
  void add_output_arc(TransitionId from, PlaceId to);

  const std::vector<Place>& places() const { return places_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  std::string& name() { return name_; }
  const std::string& name() const { return name_; }

  Marking& initial_marking() { return initial_; }
  const Marking& initial_marking() const { return initial_; }
  Marking& final_marking() { return final_; }
  const Marking& final_marking() const { return final_; }

  Marking empty_marking() const;
  /// Visible labels, sorted and deduplicated.
  std::vector<EventLabel> labels() const;

 private:
  std::string name_;
  std::vector<Place> places_;
  std::vector<Transition> transitions_;
  Marking initial_;
  Marking final_;
};

bool is_enabled(const PetriNet& net, const Marking& m, TransitionId t);
/// Throws ModelError when the transition is not enabled.
Marking fire(const PetriNet& net, const Marking& m, TransitionId t);
/// Enabled transitions in ascending id order.
std::vector<TransitionId> enabled(const PetriNet& net, const Marking& m);

struct NetCheck {
  bool ok = true;
  std::string reason;
};

/// Workflow-net shape: one source place holding the only initial token and
/// without input arcs, one sink place holding the only final token and
/// without output arcs, and every node on a path from source to sink.
NetCheck check_workflow_shape(const PetriNet& net);

/// Reachability-based soundness on bounded nets: the final marking is
/// reachable from every reachable marking, the final marking is the only
/// reachable marking covering the sink, and no transition is dead. Fails
/// when more than `max_states` markings are reachable.
NetCheck check_soundness(const PetriNet& net, std::size_t max_states = 200000);

/// Structural identity: equal names, labels, arcs and markings.
bool same_structure(const PetriNet& a, const PetriNet& b);

// PNML in the layout used by common process-mining tools (silent
// transitions carry the ProM "$invisible$" toolspecific marker, final
// markings go in <finalmarkings>).
void write_pnml(std::ostream& out, const PetriNet& net);
PetriNet read_pnml(std::istream& in);

}  // namespace pmrate
