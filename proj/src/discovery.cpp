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

#include "pmrate/discovery.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>

namespace pmrate {
namespace {

using Variant = std::vector<EventLabel>;

// Directly-follows graph over a sorted activity alphabet.
struct Dfg {
  std::vector<EventLabel> acts;
  std::vector<std::vector<bool>> edge;
  std::vector<bool> start, end;

  explicit Dfg(const TraceBag& log) {
    std::set<EventLabel> alphabet;
    for (const auto& [v, n] : log) alphabet.insert(v.begin(), v.end());
    acts.assign(alphabet.begin(), alphabet.end());
    const std::size_t n = acts.size();
    edge.assign(n, std::vector<bool>(n, false));
    start.assign(n, false);
    end.assign(n, false);
    for (const auto& [v, count] : log) {
      if (v.empty()) continue;
      start[index(v.front())] = true;
      end[index(v.back())] = true;
      for (std::size_t i = 1; i < v.size(); ++i) edge[index(v[i - 1])][index(v[i])] = true;
    }
  }

  std::size_t size() const { return acts.size(); }
  std::size_t index(const EventLabel& a) const {
    return static_cast<std::size_t>(std::lower_bound(acts.begin(), acts.end(), a) - acts.begin());
  }
};

// Partition of activity indices into ordered parts.
using Cut = std::vector<std::vector<std::size_t>>;

// Components of an undirected graph given by `linked`, ordered by their
// smallest member.
template <typename Linked>
Cut components(const std::vector<std::size_t>& nodes, Linked linked) {
  std::vector<std::size_t> comp(nodes.size(), SIZE_MAX);
  Cut out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (comp[i] != SIZE_MAX) continue;
    comp[i] = out.size();
    out.push_back({nodes[i]});
    std::vector<std::size_t> stack = {i};
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (comp[j] == SIZE_MAX && linked(nodes[a], nodes[j])) {
          comp[j] = comp[i];
          out.back().push_back(nodes[j]);
          stack.push_back(j);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

std::vector<std::size_t> all_nodes(const Dfg& g) {
  std::vector<std::size_t> v(g.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::optional<Cut> exclusive_cut(const Dfg& g) {
  auto cut = components(all_nodes(g), [&](std::size_t a, std::size_t b) {
    return g.edge[a][b] || g.edge[b][a];
  });
  if (cut.size() < 2) return std::nullopt;
  return cut;
}

std::optional<Cut> sequence_cut(const Dfg& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> group(n);
  std::iota(group.begin(), group.end(), 0);
  // Merge groups that are mutually reachable or mutually unreachable until
  // the group reachability relation is a strict total order.
  while (true) {
    std::vector<std::size_t> ids = group;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const std::size_t m = ids.size();
    auto pos = [&](std::size_t gid) {
      return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), gid) - ids.begin());
    };
    std::vector<std::vector<bool>> reach(m, std::vector<bool>(m, false));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (g.edge[a][b] && group[a] != group[b]) reach[pos(group[a])][pos(group[b])] = true;
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        if (!reach[i][k]) continue;
        for (std::size_t j = 0; j < m; ++j) {
          if (reach[k][j]) reach[i][j] = true;
        }
      }
    }
    bool merged = false;
    for (std::size_t i = 0; i < m && !merged; ++i) {
      for (std::size_t j = i + 1; j < m && !merged; ++j) {
        if (reach[i][j] == reach[j][i]) {
          for (auto& x : group) {
            if (x == ids[j]) x = ids[i];
          }
          merged = true;
        }
      }
    }
    if (merged) continue;
    if (m < 2) return std::nullopt;
    // Order by how many groups each one reaches: the first reaches all others.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    auto out_degree = [&](std::size_t i) { return std::count(reach[i].begin(), reach[i].end(), true); };
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return out_degree(a) > out_degree(b); });
    Cut cut(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t a = 0; a < n; ++a) {
        if (pos(group[a]) == order[r]) cut[r].push_back(a);
      }
    }
    return cut;
  }
}

std::optional<Cut> parallel_cut(const Dfg& g) {
  auto parts = components(all_nodes(g), [&](std::size_t a, std::size_t b) {
    return !(g.edge[a][b] && g.edge[b][a]);
  });
  auto complete = [&](const std::vector<std::size_t>& part) {
    bool s = false, e = false;
    for (auto a : part) {
      s = s || g.start[a];
      e = e || g.end[a];
    }
    return s && e;
  };
  Cut ok, lacking;
  for (auto& p : parts) (complete(p) ? ok : lacking).push_back(std::move(p));
  if (ok.size() < 2) return std::nullopt;
  for (auto& p : lacking) ok.front().insert(ok.front().end(), p.begin(), p.end());
  std::sort(ok.front().begin(), ok.front().end());
  return ok;
}

std::optional<Cut> loop_cut(const Dfg& g) {
  const std::size_t n = g.size();
  std::vector<bool> in_do(n, false);
  for (std::size_t a = 0; a < n; ++a) in_do[a] = g.start[a] || g.end[a];
  std::vector<std::size_t> rest;
  for (std::size_t a = 0; a < n; ++a) {
    if (!in_do[a]) rest.push_back(a);
  }
  if (rest.empty()) return std::nullopt;
  Cut redo = components(rest, [&](std::size_t a, std::size_t b) {
    return g.edge[a][b] || g.edge[b][a];
  });

  // A redo part may only be entered from end activities and left towards
  // start activities, and must connect to all of them uniformly.
  auto violates = [&](const std::vector<std::size_t>& part) {
    for (auto c : part) {
      bool from_some_end = false, from_all_ends = true;
      bool to_some_start = false, to_all_starts = true;
      for (std::size_t x = 0; x < n; ++x) {
        if (!in_do[x]) continue;
        if (g.edge[x][c] && !g.end[x]) return true;
        if (g.edge[c][x] && !g.start[x]) return true;
        if (g.end[x]) {
          from_some_end = from_some_end || g.edge[x][c];
          from_all_ends = from_all_ends && g.edge[x][c];
        }
        if (g.start[x]) {
          to_some_start = to_some_start || g.edge[c][x];
          to_all_starts = to_all_starts && g.edge[c][x];
        }
      }
      if (from_some_end && !from_all_ends) return true;
      if (to_some_start && !to_all_starts) return true;
    }
    return false;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = redo.begin(); it != redo.end(); ++it) {
      if (violates(*it)) {
        for (auto a : *it) in_do[a] = true;
        redo.erase(it);
        changed = true;
        break;
      }
    }
  }
  if (redo.empty()) return std::nullopt;
  Cut cut;
  cut.emplace_back();
  for (std::size_t a = 0; a < n; ++a) {
    if (in_do[a]) cut.front().push_back(a);
  }
  for (auto& r : redo) cut.push_back(std::move(r));
  return cut;
}

std::vector<std::size_t> part_of(const Dfg& g, const Cut& cut) {
  std::vector<std::size_t> part(g.size(), 0);
  for (std::size_t p = 0; p < cut.size(); ++p) {
    for (auto a : cut[p]) part[a] = p;
  }
  return part;
}

std::vector<TraceBag> split_exclusive(const TraceBag& log, const Dfg& g, const Cut& cut) {
  const auto part = part_of(g, cut);
  std::vector<TraceBag> out(cut.size());
  for (const auto& [v, count] : log) out[part[g.index(v.front())]][v] += count;
  return out;
}

std::vector<TraceBag> split_sequence(const TraceBag& log, const Dfg& g, const Cut& cut) {
  const auto part = part_of(g, cut);
  std::vector<TraceBag> out(cut.size());
  for (const auto& [v, count] : log) {
    std::vector<Variant> pieces(cut.size());
    for (const auto& e : v) pieces[part[g.index(e)]].push_back(e);
    for (std::size_t p = 0; p < cut.size(); ++p) out[p][pieces[p]] += count;
  }
  return out;
}

std::vector<TraceBag> split_parallel(const TraceBag& log, const Dfg& g, const Cut& cut) {
  // Projection onto each part; same code path as the sequence split.
  return split_sequence(log, g, cut);
}

std::vector<TraceBag> split_loop(const TraceBag& log, const Dfg& g, const Cut& cut) {
  const auto part = part_of(g, cut);
  std::vector<TraceBag> out(cut.size());
  for (const auto& [v, count] : log) {
    std::size_t i = 0;
    while (i < v.size()) {
      const std::size_t p = part[g.index(v[i])];
      Variant run;
      while (i < v.size() && part[g.index(v[i])] == p) run.push_back(v[i++]);
      out[p][run] += count;
    }
  }
  return out;
}

ProcessTree mine(const TraceBag& log);

ProcessTree mine_children(TreeOp op, const std::vector<TraceBag>& logs) {
  std::vector<ProcessTree> children;
  children.reserve(logs.size());
  for (const auto& sub : logs) children.push_back(mine(sub));
  return ProcessTree::node(op, std::move(children));
}

ProcessTree mine(const TraceBag& log) {
  bool has_empty = false, has_nonempty = false;
  for (const auto& [v, count] : log) {
    if (count == 0) continue;
    (v.empty() ? has_empty : has_nonempty) = true;
  }
  if (!has_nonempty) return ProcessTree::tau();
  if (has_empty) {
    TraceBag rest;
    for (const auto& [v, count] : log) {
      if (!v.empty() && count > 0) rest[v] += count;
    }
    return ProcessTree::node(TreeOp::Exclusive, {ProcessTree::tau(), mine(rest)});
  }
  const Dfg g(log);
  if (g.size() == 1) {
    bool all_single = true;
    for (const auto& [v, count] : log) all_single = all_single && v.size() == 1;
    if (all_single) return ProcessTree::activity(g.acts.front());
  }
  if (auto cut = exclusive_cut(g)) return mine_children(TreeOp::Exclusive, split_exclusive(log, g, *cut));
  if (auto cut = sequence_cut(g)) return mine_children(TreeOp::Sequence, split_sequence(log, g, *cut));
  if (auto cut = parallel_cut(g)) return mine_children(TreeOp::Parallel, split_parallel(log, g, *cut));
  if (auto cut = loop_cut(g)) return mine_children(TreeOp::Loop, split_loop(log, g, *cut));

  // Flower model over the alphabet.
  std::vector<ProcessTree> acts;
  for (const auto& a : g.acts) acts.push_back(ProcessTree::activity(a));
  ProcessTree body = acts.size() == 1 ? std::move(acts.front())
                                      : ProcessTree::node(TreeOp::Exclusive, std::move(acts));
  return ProcessTree::node(TreeOp::Loop, {ProcessTree::tau(), std::move(body)});
}

class NetBuilder {
 public:
  explicit NetBuilder(PetriNet& net) : net_(net) {}

  void build(const ProcessTree& t, const std::string& path, PlaceId in, PlaceId out) {
    switch (t.op) {
      case TreeOp::Activity:
        arc(in, net_.add_transition("t" + path, t.label), out);
        return;
      case TreeOp::Silent:
        arc(in, net_.add_transition("tau" + path, std::nullopt), out);
        return;
      case TreeOp::Sequence: {
        PlaceId cur = in;
        for (std::size_t i = 0; i < t.children.size(); ++i) {
          const PlaceId next = i + 1 == t.children.size()
                                   ? out
                                   : net_.add_place("p" + path + "_" + std::to_string(i + 1));
          build(t.children[i], child(path, i), cur, next);
          cur = next;
        }
        return;
      }
      case TreeOp::Exclusive:
        for (std::size_t i = 0; i < t.children.size(); ++i) build(t.children[i], child(path, i), in, out);
        return;
      case TreeOp::Parallel: {
        const TransitionId split = net_.add_transition("tau" + path + "_split", std::nullopt);
        const TransitionId join = net_.add_transition("tau" + path + "_join", std::nullopt);
        net_.add_input_arc(in, split);
        for (std::size_t i = 0; i < t.children.size(); ++i) {
          const PlaceId ci = net_.add_place("p" + child(path, i) + "_in");
          const PlaceId co = net_.add_place("p" + child(path, i) + "_out");
          net_.add_output_arc(split, ci);
          build(t.children[i], child(path, i), ci, co);
          net_.add_input_arc(co, join);
        }
        net_.add_output_arc(join, out);
        return;
      }
      case TreeOp::Loop: {
        const PlaceId body_in = net_.add_place("p" + path + "_loop");
        const PlaceId body_out = net_.add_place("p" + path + "_redo");
        arc(in, net_.add_transition("tau" + path + "_enter", std::nullopt), body_in);
        build(t.children.at(0), child(path, 0), body_in, body_out);
        for (std::size_t i = 1; i < t.children.size(); ++i) {
          build(t.children[i], child(path, i), body_out, body_in);
        }
        arc(body_out, net_.add_transition("tau" + path + "_exit", std::nullopt), out);
        return;
      }
    }
  }

 private:
  static std::string child(const std::string& path, std::size_t i) {
    return path + "_" + std::to_string(i);
  }
  void arc(PlaceId in, TransitionId t, PlaceId out) {
    net_.add_input_arc(in, t);
    net_.add_output_arc(t, out);
  }

  PetriNet& net_;
};

}  // namespace

ProcessTree ProcessTree::activity(EventLabel label) {
  return {TreeOp::Activity, std::move(label), {}};
}

ProcessTree ProcessTree::tau() { return {TreeOp::Silent, {}, {}}; }

ProcessTree ProcessTree::node(TreeOp op, std::vector<ProcessTree> children) {
  return {op, {}, std::move(children)};
}

std::string ProcessTree::str() const {
  switch (op) {
    case TreeOp::Activity: return "'" + label + "'";
    case TreeOp::Silent: return "tau";
    default: break;
  }
  std::string s = op == TreeOp::Sequence    ? "->("
                  : op == TreeOp::Exclusive ? "X("
                  : op == TreeOp::Parallel  ? "+("
                                            : "*(";
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (i) s += ", ";
    s += children[i].str();
  }
  return s + ")";
}

PetriNet to_petri_net(const ProcessTree& tree, const std::string& name) {
  PetriNet net;
  net.name() = name;
  const PlaceId source = net.add_place("source");
  const PlaceId sink = net.add_place("sink");
  NetBuilder(net).build(tree, "", source, sink);
  net.initial_marking().tokens[source] = 1;
  net.final_marking().tokens[sink] = 1;
  return net;
}

TraceBag bag_of(std::span<const Fragment> fragments) {
  TraceBag bag;
  for (const Fragment& f : fragments) ++bag[f.events];
  return bag;
}

ProcessTree discover_tree(const TraceBag& log) { return mine(log); }

PetriNet discover(const StateEventLog& log) {
  return to_petri_net(discover_tree(bag_of(log.fragments)), "state_" + std::to_string(log.state));
}

}  // namespace pmrate
