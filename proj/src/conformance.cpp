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

#include "pmrate/conformance.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <queue>
#include <set>
#include <unordered_map>

#include "pmrate/csv.hpp"
#include "pmrate/error.hpp"

namespace pmrate {
namespace {

struct StateKey {
  Marking marking;
  std::size_t pos;
  friend bool operator==(const StateKey&, const StateKey&) = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    return MarkingHash{}(k.marking) * 31u + k.pos;
  }
};

struct SearchNode {
  StateKey key;
  int g = 0;
  std::size_t parent = SIZE_MAX;
  Move move;
};

struct QueueEntry {
  int f;
  std::size_t pos;
  std::size_t seq;
  std::size_t node;

  // std::priority_queue pops the largest; invert for lowest f, then the
  // furthest trace position, then the earliest push.
  bool operator<(const QueueEntry& o) const {
    if (f != o.f) return f > o.f;
    if (pos != o.pos) return pos < o.pos;
    return seq > o.seq;
  }
};

struct Expansion {
  Move move;
  Marking next;
  std::size_t next_pos;
};

}  // namespace

std::string_view to_string(MoveKind k) {
  switch (k) {
    case MoveKind::Synchronous: return "sync";
    case MoveKind::LogOnly: return "log";
    case MoveKind::ModelOnly: return "model";
    case MoveKind::ModelSilent: return "silent";
  }
  return "?";
}

std::vector<EventLabel> Alignment::log_projection() const {
  std::vector<EventLabel> out;
  for (const Move& m : moves) {
    if (m.kind == MoveKind::Synchronous || m.kind == MoveKind::LogOnly) out.push_back(*m.label);
  }
  return out;
}

std::vector<TransitionId> Alignment::model_projection() const {
  std::vector<TransitionId> out;
  for (const Move& m : moves) {
    if (m.kind != MoveKind::LogOnly) out.push_back(*m.transition);
  }
  return out;
}

Alignment align(const PetriNet& net, std::span<const EventLabel> trace,
                const AlignOptions& options) {
  const auto& transitions = net.transitions();
  const std::vector<EventLabel> net_labels = net.labels();

  // Remaining events no transition can match: each costs at least one.
  std::vector<int> unmatched_suffix(trace.size() + 1, 0);
  for (std::size_t i = trace.size(); i-- > 0;) {
    const bool matchable = std::binary_search(net_labels.begin(), net_labels.end(), trace[i]);
    unmatched_suffix[i] = unmatched_suffix[i + 1] + (matchable ? 0 : 1);
  }

  // Model moves in label order, silent ones in id order.
  std::vector<TransitionId> visible, silent;
  for (TransitionId t = 0; t < transitions.size(); ++t) {
    (transitions[t].silent() ? silent : visible).push_back(t);
  }
  std::stable_sort(visible.begin(), visible.end(), [&](TransitionId a, TransitionId b) {
    return *transitions[a].label < *transitions[b].label;
  });

  std::vector<SearchNode> nodes;
  std::unordered_map<StateKey, std::pair<int, bool>, StateKeyHash> best;  // g, closed
  std::priority_queue<QueueEntry> open;
  std::size_t seq = 0;

  auto push = [&](StateKey key, int g, std::size_t parent, Move move) {
    auto [it, inserted] = best.try_emplace(key, g, false);
    if (!inserted) {
      if (it->second.second || it->second.first <= g) return;
      it->second.first = g;
    }
    const std::size_t pos = key.pos;
    nodes.push_back({std::move(key), g, parent, std::move(move)});
    open.push({g + unmatched_suffix[pos], pos, seq++, nodes.size() - 1});
  };

  push({net.initial_marking(), 0}, 0, SIZE_MAX, {});
  std::size_t expansions = 0;
  std::vector<Expansion> successors;
  while (!open.empty()) {
    const QueueEntry top = open.top();
    open.pop();
    const std::size_t id = top.node;
    auto& slot = best.at(nodes[id].key);
    if (slot.second || slot.first < nodes[id].g) continue;
    slot.second = true;

    const StateKey key = nodes[id].key;
    const int g = nodes[id].g;
    if (key.pos == trace.size() && key.marking == net.final_marking()) {
      Alignment result;
      result.cost = g;
      result.expansions = expansions;
      for (std::size_t n = id; nodes[n].parent != SIZE_MAX; n = nodes[n].parent) {
        result.moves.push_back(nodes[n].move);
      }
      std::reverse(result.moves.begin(), result.moves.end());
      return result;
    }
    if (++expansions > options.max_expansions) {
      throw BudgetExceeded("alignment search exceeded " + std::to_string(options.max_expansions) +
                               " expansions",
                           top.f);
    }

    successors.clear();
    const bool has_event = key.pos < trace.size();
    if (has_event) {
      for (TransitionId t : visible) {
        if (*transitions[t].label == trace[key.pos] && is_enabled(net, key.marking, t)) {
          successors.push_back({{MoveKind::Synchronous, trace[key.pos], t},
                                fire(net, key.marking, t), key.pos + 1});
        }
      }
    }
    for (TransitionId t : silent) {
      if (is_enabled(net, key.marking, t)) {
        successors.push_back({{MoveKind::ModelSilent, std::nullopt, t}, fire(net, key.marking, t), key.pos});
      }
    }
    if (has_event) {
      successors.push_back({{MoveKind::LogOnly, trace[key.pos], std::nullopt}, key.marking, key.pos + 1});
    }
    for (TransitionId t : visible) {
      if (is_enabled(net, key.marking, t)) {
        successors.push_back({{MoveKind::ModelOnly, transitions[t].label, t},
                              fire(net, key.marking, t), key.pos});
      }
    }
    for (Expansion& s : successors) {
      const int cost = s.move.cost();
      push({std::move(s.next), s.next_pos}, g + cost, id, std::move(s.move));
    }
  }
  throw ModelError("final marking of net '" + net.name() + "' is unreachable");
}

double AlignmentProfile::at(const EventLabel& label) const {
  const auto it = values.find(label);
  return it == values.end() ? 0.0 : it->second;
}

bool AlignmentProfile::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](const auto& kv) { return kv.second == 0.0; });
}

void accumulate(AlignmentProfile& profile, const Alignment& alignment,
                const ProfileOptions& options) {
  for (const Move& m : alignment.moves) {
    if ((m.kind == MoveKind::LogOnly && options.count_log_moves) ||
        (m.kind == MoveKind::ModelOnly && options.count_model_moves)) {
      profile.values[*m.label] += 1.0;
    }
  }
}

FlowExplanation explain_flow(std::span<const Fragment> fragments, const NetSet& nets,
                             const ProfileOptions& options) {
  FlowExplanation ex;
  if (!fragments.empty()) ex.flow_id = fragments.front().flow_id;
  for (const Fragment& f : fragments) {
    FragmentAlignment fa{f, std::nullopt};
    const auto it = nets.find(f.state);
    if (it == nets.end()) {
      if (options.count_log_moves) {
        for (const EventLabel& e : f.events) ex.profile.values[e] += 1.0;
      }
      if (std::find(ex.states_without_net.begin(), ex.states_without_net.end(), f.state) ==
          ex.states_without_net.end()) {
        ex.states_without_net.push_back(f.state);
      }
    } else {
      fa.alignment = align(it->second, f.events, options.align);
      accumulate(ex.profile, *fa.alignment, options);
    }
    ex.fragments.push_back(std::move(fa));
  }
  return ex;
}

AlignmentProfile profile_flow(std::span<const Fragment> fragments, const NetSet& nets,
                              const ProfileOptions& options) {
  return explain_flow(fragments, nets, options).profile;
}

AlignmentProfile profile_reference(std::span<const StateEventLog> logs, const NetSet& nets,
                                   const ProfileOptions& options) {
  AlignmentProfile total;
  std::set<std::string> sources;
  for (const StateEventLog& log : logs) {
    if (log.fragments.empty()) continue;
    const auto it = nets.find(log.state);
    if (it == nets.end()) {
      throw ModelError("no net for populated state " + std::to_string(log.state));
    }
    for (const Fragment& f : log.fragments) {
      sources.insert(f.flow_id);
      accumulate(total, align(it->second, f.events, options.align), options);
    }
  }
  if (!sources.empty()) {
    for (auto& [label, v] : total.values) v /= static_cast<double>(sources.size());
  }
  return total;
}

nlohmann::json to_json(const Alignment& a, const PetriNet* net) {
  nlohmann::json moves = nlohmann::json::array();
  for (const Move& m : a.moves) {
    nlohmann::json jm = {{"kind", to_string(m.kind)}};
    jm["label"] = m.label ? nlohmann::json(*m.label) : nlohmann::json(nullptr);
    if (m.transition && net) jm["transition"] = net->transitions()[*m.transition].name;
    moves.push_back(std::move(jm));
  }
  return {{"cost", a.cost}, {"moves", std::move(moves)}};
}

nlohmann::json to_json(const FlowExplanation& ex, const NetSet& nets) {
  nlohmann::json frags = nlohmann::json::array();
  for (const FragmentAlignment& fa : ex.fragments) {
    nlohmann::json jf = {{"state", fa.fragment.state},
                         {"offset", fa.fragment.offset},
                         {"events", fa.fragment.events}};
    if (fa.alignment) {
      const auto it = nets.find(fa.fragment.state);
      jf["alignment"] = to_json(*fa.alignment, it == nets.end() ? nullptr : &it->second);
    } else {
      jf["alignment"] = nullptr;
      jf["note"] = "no net for this state; every event counted as a log move";
    }
    frags.push_back(std::move(jf));
  }
  nlohmann::json profile = nlohmann::json::object();
  for (const auto& [label, v] : ex.profile.values) profile[label] = v;
  return {{"flow_id", ex.flow_id},
          {"fragments", std::move(frags)},
          {"profile", std::move(profile)},
          {"unseen_labels", ex.unseen_labels},
          {"states_without_net", ex.states_without_net}};
}

void write_profile_csv(std::ostream& out, const AlignmentProfile& profile) {
  out << "event_type,value\n";
  for (const auto& [label, v] : profile.values) {
    out << csv::escape(label) << ',' << csv::format_double(v) << '\n';
  }
}

AlignmentProfile read_profile_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != std::vector<std::string>{"event_type", "value"}) {
    throw DataError("profile CSV must start with the header event_type,value");
  }
  AlignmentProfile p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split_line(line);
    if (cells.size() != 2) throw DataError("profile CSV: expected two fields");
    double v = 0.0;
    try {
      v = std::stod(cells[1]);
    } catch (const std::exception&) {
      throw DataError("profile CSV: bad value " + cells[1]);
    }
    if (!(v >= 0.0)) throw DataError("profile CSV: negative value for " + cells[0]);
    p.values[cells[0]] = v;
  }
  return p;
}

}  // namespace pmrate
