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

#include "pmrate/config.hpp"

#include <fstream>
#include <set>

#include "pmrate/error.hpp"

namespace pmrate {

namespace {

using nlohmann::json;

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key ") + key + ": " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key " + where + "." + key);
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void RunConfig::validate() const {
  if (!(flow_timeout > 0)) throw ConfigError("flow_timeout must be positive");
  if (components < 1) throw ConfigError("detector.components must be at least 1");
  if (!(percentile > 0 && percentile <= 1)) throw ConfigError("detector.percentile must be in (0, 1]");
  if (k < 1) throw ConfigError("extraction.k must be at least 1");
  if (window < 1) throw ConfigError("extraction.window must be at least 1");
  bands.validate();
  if (!(split.train > 0) || !(split.validation > 0) || split.train + split.validation > 1.0 + 1e-12) {
    throw ConfigError("split fractions must be positive and sum to at most 1");
  }
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (align_budget < 1) throw ConfigError("conformance.budget must be at least 1");
  if (!count_log_moves && !count_model_moves) {
    throw ConfigError("conformance must count log moves, model moves, or both");
  }
}

RunConfig apply_json(const json& j, RunConfig c) {
  check_keys(j,
             {"schema", "version", "input", "output_dir", "flow_timeout", "server_ports", "detector",
              "extraction", "bands", "split", "runs", "seed", "conformance"},
             "config");
  if (j.contains("schema") && j["schema"] != "pmrate-config") throw ConfigError("not a pmrate-config file");
  if (j.contains("version") && j["version"] != 1) throw ConfigError("unsupported config version");
  if (j.contains("input")) {
    const auto& in = j["input"];
    check_keys(in, {"pcaps", "corpus", "scores"}, "input");
    if (in.contains("pcaps")) {
      c.pcaps.clear();
      for (const auto& p : get<std::vector<std::string>>(in, "pcaps")) c.pcaps.emplace_back(p);
    }
    if (in.contains("corpus")) c.corpus = get<std::string>(in, "corpus");
    if (in.contains("scores")) c.scores = get<std::string>(in, "scores");
  }
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir");
  if (j.contains("flow_timeout")) c.flow_timeout = get<double>(j, "flow_timeout");
  if (j.contains("server_ports")) c.server_ports = get<std::vector<std::uint16_t>>(j, "server_ports");
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    check_keys(d, {"components", "percentile"}, "detector");
    if (d.contains("components")) c.components = get<std::size_t>(d, "components");
    if (d.contains("percentile")) c.percentile = get<double>(d, "percentile");
  }
  if (j.contains("extraction")) {
    const auto& e = j["extraction"];
    check_keys(e, {"k", "window"}, "extraction");
    if (e.contains("k")) c.k = get<std::size_t>(e, "k");
    if (e.contains("window")) c.window = get<std::size_t>(e, "window");
  }
  if (j.contains("bands")) {
    const auto b = get<std::vector<double>>(j, "bands");
    if (b.size() != c.bands.bounds.size()) throw ConfigError("bands needs four inner thresholds");
    std::copy(b.begin(), b.end(), c.bands.bounds.begin());
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, {"train", "validation"}, "split");
    if (s.contains("train")) c.split.train = get<double>(s, "train");
    if (s.contains("validation")) c.split.validation = get<double>(s, "validation");
  }
  if (j.contains("runs")) c.runs = get<std::size_t>(j, "runs");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("conformance")) {
    const auto& a = j["conformance"];
    check_keys(a, {"budget", "count_log_moves", "count_model_moves"}, "conformance");
    if (a.contains("budget")) c.align_budget = get<std::size_t>(a, "budget");
    if (a.contains("count_log_moves")) c.count_log_moves = get<bool>(a, "count_log_moves");
    if (a.contains("count_model_moves")) c.count_model_moves = get<bool>(a, "count_model_moves");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return apply_json(j, std::move(base));
}

json to_json(const RunConfig& c) {
  json input = json::object();
  std::vector<std::string> pcaps;
  for (const auto& p : c.pcaps) pcaps.push_back(p.string());
  input["pcaps"] = pcaps;
  if (c.corpus) input["corpus"] = c.corpus->string();
  if (c.scores) input["scores"] = c.scores->string();
  return {
      {"schema", "pmrate-config"},
      {"version", 1},
      {"input", input},
      {"output_dir", c.output_dir.string()},
      {"flow_timeout", c.flow_timeout},
      {"server_ports", c.server_ports},
      {"detector", {{"components", c.components}, {"percentile", c.percentile}}},
      {"extraction", {{"k", c.k}, {"window", c.window}}},
      {"bands", c.bands.bounds},
      {"split", {{"train", c.split.train}, {"validation", c.split.validation}}},
      {"runs", c.runs},
      {"seed", c.seed},
      {"conformance",
       {{"budget", c.align_budget},
        {"count_log_moves", c.count_log_moves},
        {"count_model_moves", c.count_model_moves}}},
  };
}

std::uint64_t sub_seed(std::uint64_t master, std::string_view stage) {
  // FNV-1a over the stage name, mixed with the master seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : stage) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master) ^ h);
}

}  // namespace pmrate
