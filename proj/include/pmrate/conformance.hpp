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

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmrate/events.hpp"
#include "pmrate/petri_net.hpp"

namespace pmrate {

enum class MoveKind : std::uint8_t { Synchronous, LogOnly, ModelOnly, ModelSilent };

std::string_view to_string(MoveKind k);

struct Move {
  MoveKind kind = MoveKind::Synchronous;
  std::optional<EventLabel> label;         // absent for ModelSilent
  std::optional<TransitionId> transition;  // absent for LogOnly

  /// Unit costs for visible deviations; matches and silent steps are free.
  int cost() const { return kind == MoveKind::LogOnly || kind == MoveKind::ModelOnly ? 1 : 0; }
};

struct Alignment {
  std::vector<Move> moves;
  int cost = 0;
  std::size_t expansions = 0;

  /// Labels of Synchronous and LogOnly moves, in order.
  std::vector<EventLabel> log_projection() const;
  /// Transitions of every model-side move, in order.
  std::vector<TransitionId> model_projection() const;
};

struct AlignOptions {
  std::size_t max_expansions = 1'000'000;
};

/// Optimal alignment by A* over the synchronous product (marking x trace
/// position). The heuristic counts remaining trace events whose label no
/// transition carries. Successors are generated synchronous first, then
/// silent, then log and model moves by label, which fixes the result among
/// equal-cost alignments. Throws BudgetExceeded past the expansion cap and
/// ModelError when the final marking cannot be reached.
Alignment align(const PetriNet& net, std::span<const EventLabel> trace,
                const AlignOptions& options = {});

/// Per-event-type misalignment counts.
struct AlignmentProfile {
  std::map<EventLabel, double> values;

  double at(const EventLabel& label) const;
  bool is_zero() const;
  friend bool operator==(const AlignmentProfile&, const AlignmentProfile&) = default;
};

struct ProfileOptions {
  AlignOptions align;
  bool count_log_moves = true;
  bool count_model_moves = true;
};

/// Adds one per LogOnly/ModelOnly move to the move's label.
void accumulate(AlignmentProfile& profile, const Alignment& alignment,
                const ProfileOptions& options = {});

using NetSet = std::map<StateId, PetriNet>;

struct FragmentAlignment {
  Fragment fragment;
  std::optional<Alignment> alignment;  // empty when the state has no net
};

/// Process-based explanation of one flow.
struct FlowExplanation {
  std::string flow_id;
  std::vector<FragmentAlignment> fragments;
  AlignmentProfile profile;
  std::vector<EventLabel> unseen_labels;  // labels outside the training alphabet
  std::vector<StateId> states_without_net;
};

/// Aligns every fragment of one flow to its state's net and counts
/// deviations. Fragments of a state without a net count all their events as
/// log moves.
FlowExplanation explain_flow(std::span<const Fragment> fragments, const NetSet& nets,
                             const ProfileOptions& options = {});

AlignmentProfile profile_flow(std::span<const Fragment> fragments, const NetSet& nets,
                              const ProfileOptions& options = {});

/// Reference profile: total deviations per label over all fragments of all
/// source traces, divided by the number of source traces. Throws ModelError
/// when a populated state has no net.
AlignmentProfile profile_reference(std::span<const StateEventLog> logs, const NetSet& nets,
                                   const ProfileOptions& options = {});

nlohmann::json to_json(const Alignment& alignment, const PetriNet* net = nullptr);
nlohmann::json to_json(const FlowExplanation& explanation, const NetSet& nets);

// Profile CSV: header "event_type,value", one row per label.
void write_profile_csv(std::ostream& out, const AlignmentProfile& profile);
AlignmentProfile read_profile_csv(std::istream& in);

}  // namespace pmrate
