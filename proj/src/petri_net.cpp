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

#include "pmrate/petri_net.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "pmrate/error.hpp"
#include "pmrate/xml.hpp"

namespace pmrate {

std::uint64_t Marking::total() const {
  std::uint64_t n = 0;
  for (auto t : tokens) n += t;
  return n;
}

std::size_t MarkingHash::operator()(const Marking& m) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (auto t : m.tokens) {
    h ^= t + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

PlaceId PetriNet::add_place(std::string name) {
  places_.push_back({std::move(name)});
  initial_.tokens.push_back(0);
  final_.tokens.push_back(0);
  return places_.size() - 1;
}

TransitionId PetriNet::add_transition(std::string name, std::optional<EventLabel> label) {
  transitions_.push_back({std::move(name), std::move(label), {}, {}});
  return transitions_.size() - 1;
}

void PetriNet::add_input_arc(PlaceId from, TransitionId to) {
  if (from >= places_.size() || to >= transitions_.size()) throw ModelError("arc names an unknown node");
  transitions_[to].inputs.push_back(from);
}

void PetriNet::add_output_arc(TransitionId from, PlaceId to) {
  if (to >= places_.size() || from >= transitions_.size()) throw ModelError("arc names an unknown node");
  transitions_[from].outputs.push_back(to);
}

Marking PetriNet::empty_marking() const {
  return Marking{std::vector<std::uint32_t>(places_.size(), 0)};
}

std::vector<EventLabel> PetriNet::labels() const {
  std::set<EventLabel> s;
  for (const auto& t : transitions_) {
    if (t.label) s.insert(*t.label);
  }
  return {s.begin(), s.end()};
}

bool is_enabled(const PetriNet& net, const Marking& m, TransitionId t) {
  const Transition& tr = net.transitions().at(t);
  // Count multiplicities so a repeated input arc needs two tokens.
  for (PlaceId p : tr.inputs) {
    const auto need = static_cast<std::uint32_t>(std::count(tr.inputs.begin(), tr.inputs.end(), p));
    if (m.tokens[p] < need) return false;
  }
  return true;
}

Marking fire(const PetriNet& net, const Marking& m, TransitionId t) {
  if (!is_enabled(net, m, t)) {
    throw ModelError("transition " + net.transitions().at(t).name + " is not enabled");
  }
  Marking next = m;
  const Transition& tr = net.transitions()[t];
  for (PlaceId p : tr.inputs) --next.tokens[p];
  for (PlaceId p : tr.outputs) ++next.tokens[p];
  return next;
}

std::vector<TransitionId> enabled(const PetriNet& net, const Marking& m) {
  std::vector<TransitionId> out;
  for (TransitionId t = 0; t < net.transitions().size(); ++t) {
    if (is_enabled(net, m, t)) out.push_back(t);
  }
  return out;
}

NetCheck check_workflow_shape(const PetriNet& net) {
  const std::size_t np = net.places().size();
  const std::size_t nt = net.transitions().size();
  std::vector<std::size_t> in_deg(np, 0), out_deg(np, 0);
  for (const auto& t : net.transitions()) {
    for (PlaceId p : t.inputs) ++out_deg[p];
    for (PlaceId p : t.outputs) ++in_deg[p];
  }
  std::vector<PlaceId> sources, sinks;
  for (PlaceId p = 0; p < np; ++p) {
    if (in_deg[p] == 0) sources.push_back(p);
    if (out_deg[p] == 0) sinks.push_back(p);
  }
  if (sources.size() != 1) return {false, "expected exactly one source place, found " + std::to_string(sources.size())};
  if (sinks.size() != 1) return {false, "expected exactly one sink place, found " + std::to_string(sinks.size())};
  const PlaceId source = sources[0], sink = sinks[0];
  Marking expect_init = net.empty_marking();
  expect_init.tokens[source] = 1;
  Marking expect_final = net.empty_marking();
  expect_final.tokens[sink] = 1;
  if (net.initial_marking() != expect_init) return {false, "initial marking is not one token on the source place"};
  if (net.final_marking() != expect_final) return {false, "final marking is not one token on the sink place"};

  // Nodes: places [0, np), transitions [np, np + nt).
  std::vector<std::vector<std::size_t>> fwd(np + nt), bwd(np + nt);
  for (TransitionId t = 0; t < nt; ++t) {
    for (PlaceId p : net.transitions()[t].inputs) {
      fwd[p].push_back(np + t);
      bwd[np + t].push_back(p);
    }
    for (PlaceId p : net.transitions()[t].outputs) {
      fwd[np + t].push_back(p);
      bwd[p].push_back(np + t);
    }
  }
  auto reach = [](const std::vector<std::vector<std::size_t>>& g, std::size_t start) {
    std::vector<bool> seen(g.size(), false);
    std::vector<std::size_t> stack = {start};
    seen[start] = true;
    while (!stack.empty()) {
      const auto n = stack.back();
      stack.pop_back();
      for (auto m : g[n]) {
        if (!seen[m]) {
          seen[m] = true;
          stack.push_back(m);
        }
      }
    }
    return seen;
  };
  const auto from_source = reach(fwd, source);
  const auto to_sink = reach(bwd, sink);
  for (std::size_t n = 0; n < np + nt; ++n) {
    if (!from_source[n] || !to_sink[n]) {
      const std::string name = n < np ? net.places()[n].name : net.transitions()[n - np].name;
      return {false, "node " + name + " is not on a path from source to sink"};
    }
  }
  return {};
}

NetCheck check_soundness(const PetriNet& net, std::size_t max_states) {
  std::unordered_map<Marking, std::size_t, MarkingHash> index;
  std::vector<Marking> states;
  std::vector<std::vector<std::size_t>> preds;
  std::vector<bool> fired(net.transitions().size(), false);
  std::deque<std::size_t> queue;
  index.emplace(net.initial_marking(), 0);
  states.push_back(net.initial_marking());
  preds.emplace_back();
  queue.push_back(0);
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    for (TransitionId t : enabled(net, states[s])) {
      fired[t] = true;
      Marking next = fire(net, states[s], t);
      auto [it, inserted] = index.emplace(next, states.size());
      if (inserted) {
        if (states.size() >= max_states) {
          return {false, "state space exceeds " + std::to_string(max_states) + " markings"};
        }
        states.push_back(std::move(next));
        preds.emplace_back();
        queue.push_back(it->second);
      }
      preds[it->second].push_back(s);
    }
  }
  const auto fin = index.find(net.final_marking());
  if (fin == index.end()) return {false, "final marking is unreachable"};
  std::vector<bool> can_finish(states.size(), false);
  std::vector<std::size_t> stack = {fin->second};
  can_finish[fin->second] = true;
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    for (auto p : preds[s]) {
      if (!can_finish[p]) {
        can_finish[p] = true;
        stack.push_back(p);
      }
    }
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (!can_finish[s]) return {false, "a reachable marking cannot reach the final marking"};
    bool covers = true;
    for (std::size_t p = 0; p < net.places().size(); ++p) {
      if (states[s].tokens[p] < net.final_marking().tokens[p]) covers = false;
    }
    if (covers && states[s] != net.final_marking()) {
      return {false, "a reachable marking strictly covers the final marking"};
    }
  }
  for (TransitionId t = 0; t < fired.size(); ++t) {
    if (!fired[t]) return {false, "transition " + net.transitions()[t].name + " is dead"};
  }
  return {};
}

bool same_structure(const PetriNet& a, const PetriNet& b) {
  if (a.places().size() != b.places().size() ||
      a.transitions().size() != b.transitions().size()) {
    return false;
  }
  for (std::size_t p = 0; p < a.places().size(); ++p) {
    if (a.places()[p].name != b.places()[p].name) return false;
  }
  for (std::size_t t = 0; t < a.transitions().size(); ++t) {
    const auto& x = a.transitions()[t];
    const auto& y = b.transitions()[t];
    if (x.name != y.name || x.label != y.label || x.inputs != y.inputs || x.outputs != y.outputs) {
      return false;
    }
  }
  return a.initial_marking() == b.initial_marking() && a.final_marking() == b.final_marking();
}

void write_pnml(std::ostream& out, const PetriNet& net) {
  const std::string id = net.name().empty() ? "net" : net.name();
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<pnml>\n"
      << "  <net id=\"" << xml::escape(id)
      << "\" type=\"http://www.pnml.org/version-2009/grammar/pnmlcoremodel\">\n"
      << "    <name><text>" << xml::escape(id) << "</text></name>\n"
      << "    <page id=\"page0\">\n";
  for (PlaceId p = 0; p < net.places().size(); ++p) {
    const auto& name = xml::escape(net.places()[p].name);
    out << "      <place id=\"" << name << "\">\n        <name><text>" << name << "</text></name>\n";
    if (net.initial_marking().tokens[p] > 0) {
      out << "        <initialMarking><text>" << net.initial_marking().tokens[p]
          << "</text></initialMarking>\n";
    }
    out << "      </place>\n";
  }
  for (const auto& t : net.transitions()) {
    const auto name = xml::escape(t.name);
    out << "      <transition id=\"" << name << "\">\n        <name><text>"
        << (t.label ? xml::escape(*t.label) : name) << "</text></name>\n";
    if (t.silent()) {
      out << "        <toolspecific tool=\"ProM\" version=\"6.4\" activity=\"$invisible$\" "
             "localNodeID=\""
          << name << "\"/>\n";
    }
    out << "      </transition>\n";
  }
  std::size_t arc = 0;
  for (const auto& t : net.transitions()) {
    for (PlaceId p : t.inputs) {
      out << "      <arc id=\"a" << arc++ << "\" source=\"" << xml::escape(net.places()[p].name)
          << "\" target=\"" << xml::escape(t.name) << "\"/>\n";
    }
    for (PlaceId p : t.outputs) {
      out << "      <arc id=\"a" << arc++ << "\" source=\"" << xml::escape(t.name)
          << "\" target=\"" << xml::escape(net.places()[p].name) << "\"/>\n";
    }
  }
  out << "    </page>\n    <finalmarkings>\n      <marking>\n";
  for (PlaceId p = 0; p < net.places().size(); ++p) {
    if (net.final_marking().tokens[p] > 0) {
      out << "        <place idref=\"" << xml::escape(net.places()[p].name) << "\"><text>"
          << net.final_marking().tokens[p] << "</text></place>\n";
    }
  }
  out << "      </marking>\n    </finalmarkings>\n  </net>\n</pnml>\n";
}

PetriNet read_pnml(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("PNML: ") + e.what());
  }
  const auto net_node = tree.get_child_optional("pnml.net");
  if (!net_node) throw DataError("PNML: missing <pnml><net>");
  PetriNet net;
  net.name() = net_node->get<std::string>("<xmlattr>.id", "net");

  std::map<std::string, PlaceId> place_ids;
  std::map<std::string, TransitionId> transition_ids;
  std::vector<std::pair<std::string, std::string>> arcs;

  auto visit = [&](const pt::ptree& container) {
    for (const auto& [tag, node] : container) {
      if (tag == "place") {
        const auto id = node.get<std::string>("<xmlattr>.id");
        const PlaceId p = net.add_place(id);
        place_ids[id] = p;
        net.initial_marking().tokens[p] = node.get<std::uint32_t>("initialMarking.text", 0);
      } else if (tag == "transition") {
        const auto id = node.get<std::string>("<xmlattr>.id");
        bool invisible = false;
        for (const auto& [ctag, child] : node) {
          if (ctag == "toolspecific" &&
              child.get<std::string>("<xmlattr>.activity", "") == "$invisible$") {
            invisible = true;
          }
        }
        std::optional<EventLabel> label;
        if (!invisible) label = node.get<std::string>("name.text", id);
        transition_ids[id] = net.add_transition(id, label);
      } else if (tag == "arc") {
        arcs.emplace_back(node.get<std::string>("<xmlattr>.source"),
                          node.get<std::string>("<xmlattr>.target"));
      }
    }
  };
  visit(*net_node);
  for (const auto& [tag, node] : *net_node) {
    if (tag == "page") visit(node);
  }
  for (const auto& [src, dst] : arcs) {
    if (place_ids.contains(src) && transition_ids.contains(dst)) {
      net.add_input_arc(place_ids[src], transition_ids[dst]);
    } else if (transition_ids.contains(src) && place_ids.contains(dst)) {
      net.add_output_arc(transition_ids[src], place_ids[dst]);
    } else {
      throw DataError("PNML: arc " + src + " -> " + dst + " does not join a place and a transition");
    }
  }
  if (const auto fm = net_node->get_child_optional("finalmarkings")) {
    for (const auto& [mtag, marking] : *fm) {
      if (mtag != "marking") continue;
      for (const auto& [ptag, place] : marking) {
        if (ptag != "place") continue;
        const auto ref = place.get<std::string>("<xmlattr>.idref");
        if (!place_ids.contains(ref)) throw DataError("PNML: final marking names unknown place " + ref);
        net.final_marking().tokens[place_ids[ref]] = place.get<std::uint32_t>("text", 1);
      }
      break;
    }
  }
  return net;
}

}  // namespace pmrate
