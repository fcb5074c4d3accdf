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

// pmrate: rate anomaly-detector alarms against a process model of false
// positives.
//
//   pmrate gen-synthetic --normal 500 --slowloris 500 --out corpus/
//   pmrate train    --corpus normal/ --out bundle/
//   pmrate rate     --bundle bundle/ --corpus capture/ --out ratings/
//   pmrate explain  --bundle bundle/ --corpus capture/ --flow gsl-000003
//   pmrate evaluate --corpus corpus/ --runs 5 --out report/
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 alignment budget
// exceeded.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "pmrate/config.hpp"
#include "pmrate/error.hpp"
#include "pmrate/pipeline.hpp"
#include "pmrate/synthetic.hpp"

namespace fs = std::filesystem;
using namespace pmrate;

namespace {

constexpr const char* kOutDirEnv = "PMRATE_OUT_DIR";

/// Flag values; only options actually given on the command line override the
/// config file.
struct Flags {
  std::string config;
  std::string out;
  std::string corpus;
  std::vector<std::string> pcaps;
  std::string scores;
  std::uint64_t seed = 0;
  std::size_t components = 0;
  double percentile = 0;
  std::size_t k = 0;
  std::size_t window = 0;
  std::size_t runs = 0;
  double timeout = 0;
  double train_frac = 0;
  double val_frac = 0;
  std::vector<double> bands;
  std::size_t budget = 0;
  std::vector<std::uint16_t> ports;
  bool no_log_moves = false;
  bool no_model_moves = false;
};

struct Registered {
  std::map<std::string, CLI::Option*> opt;
  bool given(const std::string& name) const {
    const auto it = opt.find(name);
    return it != opt.end() && it->second->count() > 0;
  }
};

Registered add_common(CLI::App& cmd, Flags& f, bool inputs, bool experiment) {
  Registered r;
  r.opt["config"] = cmd.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  r.opt["out"] = cmd.add_option("--out,-o", f.out, "output directory (env " + std::string(kOutDirEnv) + ")");
  r.opt["seed"] = cmd.add_option("--seed", f.seed, "master seed");
  if (inputs) {
    r.opt["corpus"] = cmd.add_option("--corpus", f.corpus, "flow corpus directory");
    r.opt["pcap"] = cmd.add_option("--pcap", f.pcaps, "capture file (repeatable)");
    r.opt["scores"] = cmd.add_option("--scores", f.scores, "external detector scores CSV");
    r.opt["timeout"] = cmd.add_option("--timeout", f.timeout, "flow idle timeout, seconds");
    r.opt["port"] = cmd.add_option("--server-port", f.ports, "keep only these TCP ports (repeatable)");
    r.opt["budget"] = cmd.add_option("--budget", f.budget, "alignment expansion budget");
  }
  if (experiment) {
    r.opt["components"] = cmd.add_option("--components", f.components, "baseline detector components");
    r.opt["percentile"] = cmd.add_option("--percentile", f.percentile, "threshold percentile in (0, 1]");
    r.opt["k"] = cmd.add_option("-k,--states", f.k, "number of states");
    r.opt["window"] = cmd.add_option("-w,--window", f.window, "sliding window length");
    r.opt["runs"] = cmd.add_option("--runs", f.runs, "evaluation runs");
    r.opt["train"] = cmd.add_option("--train-fraction", f.train_frac, "share of normal flows for training");
    r.opt["validation"] = cmd.add_option("--validation-fraction", f.val_frac, "share for threshold calibration");
    r.opt["bands"] = cmd.add_option("--bands", f.bands, "four inner band thresholds")->delimiter(',');
    r.opt["no_log"] = cmd.add_flag("--no-log-moves", f.no_log_moves, "ignore log moves in profiles");
    r.opt["no_model"] = cmd.add_flag("--no-model-moves", f.no_model_moves, "ignore model moves in profiles");
  }
  return r;
}

RunConfig resolve(const Flags& f, const Registered& r) {
  RunConfig c;
  if (r.given("config")) c = load_config(f.config, c);
  if (const char* env = std::getenv(kOutDirEnv); env && *env) c.output_dir = env;
  if (r.given("out")) c.output_dir = f.out;
  if (r.given("seed")) c.seed = f.seed;
  if (r.given("corpus")) {
    c.corpus = f.corpus;
    c.pcaps.clear();
  }
  if (r.given("pcap")) {
    c.pcaps.assign(f.pcaps.begin(), f.pcaps.end());
    c.corpus.reset();
  }
  if (r.given("scores")) c.scores = f.scores;
  if (r.given("timeout")) c.flow_timeout = f.timeout;
  if (r.given("port")) c.server_ports = f.ports;
  if (r.given("components")) c.components = f.components;
  if (r.given("percentile")) c.percentile = f.percentile;
  if (r.given("k")) c.k = f.k;
  if (r.given("window")) c.window = f.window;
  if (r.given("runs")) c.runs = f.runs;
  if (r.given("train")) c.split.train = f.train_frac;
  if (r.given("validation")) c.split.validation = f.val_frac;
  if (r.given("bands")) {
    if (f.bands.size() != c.bands.bounds.size()) throw ConfigError("--bands needs four values");
    std::copy(f.bands.begin(), f.bands.end(), c.bands.bounds.begin());
  }
  if (r.given("budget")) c.align_budget = f.budget;
  if (f.no_log_moves) c.count_log_moves = false;
  if (f.no_model_moves) c.count_model_moves = false;
  c.validate();
  return c;
}

std::optional<ScoreTable> scores_of(const RunConfig& c) {
  if (!c.scores) return std::nullopt;
  return read_score_table(*c.scores);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

int cmd_gen(std::size_t n_normal, std::size_t n_attack, const std::string& pcap, const RunConfig& c) {
  if (n_normal + n_attack == 0) throw ConfigError("nothing to generate: give --normal and/or --slowloris");
  std::vector<Flow> flows;
  if (n_normal > 0) flows = generate_flows(TrafficProfile::Normal, n_normal, sub_seed(c.seed, "synthetic/normal"));
  if (n_attack > 0) {
    auto a = generate_flows(TrafficProfile::Slowloris, n_attack, sub_seed(c.seed, "synthetic/slowloris"));
    flows.insert(flows.end(), a.begin(), a.end());
  }
  save_corpus(c.output_dir, flows);
  if (!pcap.empty()) write_pcap(pcap, to_packets(flows));
  std::printf("wrote %zu flows (%zu normal, %zu slowloris) to %s\n", flows.size(), n_normal, n_attack,
              c.output_dir.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& c) {
  const auto flows = load_flows(c);
  std::vector<Flow> normal;
  std::size_t dropped = 0;
  for (const auto& f : flows) {
    if (f.truth == Truth::Attack) {
      ++dropped;
    } else {
      normal.push_back(f);
    }
  }
  if (dropped) std::fprintf(stderr, "note: ignored %zu flows labelled attack\n", dropped);
  // Training and validation keep the configured ratio over all normal input.
  std::mt19937_64 rng(sub_seed(c.seed, "split"));
  std::shuffle(normal.begin(), normal.end(), rng);
  const double share = c.split.train / (c.split.train + c.split.validation);
  const auto n_train = static_cast<std::size_t>(std::floor(share * static_cast<double>(normal.size())));
  const std::span<const Flow> all(normal);
  const auto ext = scores_of(c);
  const auto bundle =
      train_bundle({all.first(n_train), all.subspan(n_train)}, c, c.seed, ext ? &*ext : nullptr);
  save_bundle(c.output_dir, bundle);
  std::printf("trained on %zu flows, calibrated on %zu, %zu false positives, %zu states -> %s\n", n_train,
              normal.size() - n_train, bundle.fp_pool.size(), bundle.extraction.k, c.output_dir.string().c_str());
  return 0;
}

/// A --budget flag at inference overrides the one stored in the bundle.
TrainedBundle open_bundle(const std::string& dir, std::optional<std::size_t> budget) {
  auto bundle = load_bundle(dir);
  if (budget) bundle.profile_options.align.max_expansions = *budget;
  return bundle;
}

int cmd_rate(const RunConfig& c, const std::string& bundle_dir, std::optional<std::size_t> budget) {
  const auto bundle = open_bundle(bundle_dir, budget);
  const auto flows = load_flows(c);
  const auto ext = scores_of(c);
  const auto outcome = rate_flows(bundle, flows, ext ? &*ext : nullptr);
  write_rate_outputs(c.output_dir, outcome, bundle);
  std::printf("%zu flows, %zu alarms\n", flows.size(), outcome.report.alarms.size());
  for (auto b : kAllBands) {
    std::printf("  %-8s %zu\n", std::string(to_string(b)).c_str(),
                outcome.report.histogram[static_cast<std::size_t>(ordinal(b) - 1)]);
  }
  return 0;
}

int cmd_explain(const RunConfig& c, const std::string& bundle_dir, std::optional<std::size_t> budget,
                const std::vector<std::string>& ids, bool to_stdout) {
  const auto bundle = open_bundle(bundle_dir, budget);
  auto flows = load_flows(c);
  if (!ids.empty()) {
    const std::set<std::string> wanted(ids.begin(), ids.end());
    std::erase_if(flows, [&](const Flow& f) { return !wanted.contains(f.id); });
    if (flows.size() != wanted.size()) throw DataError("some requested flow ids are not in the input");
  }
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!to_stdout) {
    fs::create_directories(c.output_dir);
    file.open(c.output_dir / "explanations.jsonl");
    if (!file) throw DataError("cannot write explanations");
    out = &file;
  }
  // Explicitly requested flows are explained whatever the detector says.
  for (const auto& f : flows) {
    const auto trace = to_trace(f);
    auto ex = explain_flow(split_by_state(trace, bundle.extraction), bundle.nets, bundle.profile_options);
    ex.flow_id = f.id;
    ex.unseen_labels = unseen_labels(trace, bundle.extraction);
    auto j = to_json(ex, bundle.nets);
    j["cos_sim"] = cos_sim(bundle.reference, ex.profile);
    j["band"] = to_string(to_band(j["cos_sim"].get<double>(), bundle.bands));
    *out << j.dump() << '\n';
  }
  return 0;
}

int cmd_evaluate(const RunConfig& c, bool keep_artifacts) {
  const auto flows = load_flows(c);
  const auto ext = scores_of(c);
  fs::create_directories(c.output_dir);
  const fs::path artifacts = c.output_dir / "runs";
  const auto report = evaluate(flows, c, ext ? &*ext : nullptr, keep_artifacts ? &artifacts : nullptr);
  write_json(c.output_dir / "evaluation.json", to_json(report));
  write_json(c.output_dir / "config.json", to_json(c));
  std::ofstream csv(c.output_dir / "evaluation.csv");
  write_report_csv(csv, report);
  print_report(std::cout, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate IDS alarms against a process model of false positives"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-synthetic", "generate a labelled normal/slowloris flow corpus");
  std::size_t n_normal = 0, n_attack = 0;
  std::string pcap_out;
  gen->add_option("--normal", n_normal, "normal flows");
  gen->add_option("--slowloris", n_attack, "slowloris flows");
  gen->add_option("--write-pcap", pcap_out, "also write the packets as a capture");
  const auto r_gen = add_common(*gen, f, false, false);

  auto* train = app.add_subcommand("train", "fit detector, states, nets and reference profile");
  const auto r_train = add_common(*train, f, true, true);

  std::string bundle_dir;
  auto* rate = app.add_subcommand("rate", "classify flows and rate the alarms");
  rate->add_option("--bundle", bundle_dir, "trained bundle directory")->required();
  const auto r_rate = add_common(*rate, f, true, false);

  std::vector<std::string> flow_ids;
  bool to_stdout = false;
  auto* explain = app.add_subcommand("explain", "dump per-flow alignments as JSON lines");
  explain->add_option("--bundle", bundle_dir, "trained bundle directory")->required();
  explain->add_option("--flow", flow_ids, "flow id (repeatable; default all)");
  explain->add_flag("--stdout", to_stdout, "print instead of writing explanations.jsonl");
  const auto r_explain = add_common(*explain, f, true, false);

  bool keep = false;
  auto* eval = app.add_subcommand("evaluate", "seeded multi-run evaluation on labelled flows");
  eval->add_flag("--keep-artifacts", keep, "store each run's bundle and ratings");
  const auto r_eval = add_common(*eval, f, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(n_normal, n_attack, pcap_out, resolve(f, r_gen));
    if (train->parsed()) return cmd_train(resolve(f, r_train));
    auto budget = [&](const Registered& r) {
      return r.given("budget") ? std::optional<std::size_t>(f.budget) : std::nullopt;
    };
    if (rate->parsed()) return cmd_rate(resolve(f, r_rate), bundle_dir, budget(r_rate));
    if (explain->parsed()) {
      return cmd_explain(resolve(f, r_explain), bundle_dir, budget(r_explain), flow_ids, to_stdout);
    }
    if (eval->parsed()) return cmd_evaluate(resolve(f, r_eval), keep);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const BudgetExceeded& e) {
    std::fprintf(stderr, "budget exceeded: %s (cost >= %g)\n", e.what(), e.lower_bound());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  }
  return 0;
}
