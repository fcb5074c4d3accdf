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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pmrate/events.hpp"
#include "pmrate/petri_net.hpp"

namespace pmrate {

enum class TreeOp : std::uint8_t { Sequence, Exclusive, Parallel, Loop, Activity, Silent };

/// Block-structured process model. A Loop has its body as the first child
/// and one or more redo parts after it.
struct ProcessTree {
  TreeOp op = TreeOp::Silent;
  EventLabel label;  // Activity only
  std::vector<ProcessTree> children;

  static ProcessTree activity(EventLabel label);
  static ProcessTree tau();
  static ProcessTree node(TreeOp op, std::vector<ProcessTree> children);

  /// Compact notation, e.g. ->('a', X('b', tau), *('c', tau)).
  std::string str() const;
  friend bool operator==(const ProcessTree&, const ProcessTree&) = default;
};

/// Sound workflow net of the tree. Node names derive from tree paths, so
/// equal trees give identical nets.
PetriNet to_petri_net(const ProcessTree& tree, const std::string& name = "net");

/// A bag of traces: distinct variants with multiplicities.
using TraceBag = std::map<std::vector<EventLabel>, std::size_t>;

TraceBag bag_of(std::span<const Fragment> fragments);

/// Vanilla inductive miner. Tries exclusive, sequence, parallel and loop
/// cuts on the directly-follows graph in that order; logs with empty traces
/// become a choice between tau and the rest; the fall-through is the flower
/// model over the remaining alphabet.
ProcessTree discover_tree(const TraceBag& log);

/// Inductive-miner net for one state log. An empty log gives source->tau->sink.
PetriNet discover(const StateEventLog& log);

}  // namespace pmrate
