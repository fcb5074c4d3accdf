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

#include "pmrate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "pmrate/csv.hpp"
#include "pmrate/discovery.hpp"
#include "pmrate/error.hpp"
#include "pmrate/pcap.hpp"

namespace pmrate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

std::string state_file(StateId s, const char* ext) { return "state_" + std::to_string(s) + ext; }

double external_score(const ScoreTable& table, const std::string& id) {
  const auto it = table.find(id);
  if (it == table.end()) throw DataError("no external score for flow " + id);
  return it->second;
}

std::vector<ScoredFlow> score_flows(const DetectorModel& detector, std::span<const Flow> flows,
                                    const ScoreTable* external) {
  if (detector.kind == DetectorKind::ReconstructionBaseline) return classify(detector, flows);
  if (!external) throw ConfigError("bundle expects external detector scores; pass a scores file");
  if (!detector.threshold) throw ConfigError("detector threshold not calibrated");
  std::vector<ScoredFlow> out;
  out.reserve(flows.size());
  for (const Flow& f : flows) {
    const double s = external_score(*external, f.id);
    out.push_back({f.id, s, decide(s, *detector.threshold), f.truth});
  }
  return out;
}

}  // namespace

ScoreTable read_score_table(const fs::path& path) {
  const auto imported = import_scores(path, 0.0);
  ScoreTable table;
  for (const auto& s : imported.scored) {
    if (!table.emplace(s.flow_id, s.score).second) throw DataError("duplicate score for flow " + s.flow_id);
  }
  return table;
}

TrainedBundle train_bundle(const TrainSplit& split, const RunConfig& config, std::uint64_t seed,
                           const ScoreTable* external) {
  config.validate();
  TrainedBundle b;
  b.bands = config.bands;
  b.profile_options.align.max_expansions = config.align_budget;
  b.profile_options.count_log_moves = config.count_log_moves;
  b.profile_options.count_model_moves = config.count_model_moves;

  const std::uint64_t detector_seed = sub_seed(seed, "detector");
  if (external) {
    if (split.validation.size() < 10) throw DataError("validation set needs at least 10 flows");
    std::vector<double> scores;
    for (const Flow& f : split.validation) scores.push_back(external_score(*external, f.id));
    b.detector.kind = DetectorKind::ExternalScores;
    b.detector.seed = detector_seed;
    b.detector.percentile = config.percentile;
    b.detector.threshold = nearest_rank(std::move(scores), config.percentile);
  } else {
    std::vector<FeatureVector> train, validation;
    for (const Flow& f : split.train) train.push_back(f.features);
    for (const Flow& f : split.validation) validation.push_back(f.features);
    b.detector = calibrate_threshold(fit_baseline(train, config.components, detector_seed), validation,
                                     config.percentile);
  }

  // Normal validation flows the detector flags are the false-positive pool.
  const auto scored = score_flows(b.detector, split.validation, external);
  std::vector<Trace> traces;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].predicted != Prediction::Positive) continue;
    b.fp_pool.push_back(split.validation[i].id);
    traces.push_back(to_trace(split.validation[i]));
  }
  if (traces.empty()) {
    throw DataError("no false positives among " + std::to_string(split.validation.size()) +
                    " validation flows at percentile " + csv::format_double(config.percentile) +
                    "; lower the percentile to obtain a false-positive pool");
  }

  ExtractionParams params;
  params.k = config.k;
  params.window = config.window;
  params.seed = sub_seed(seed, "extraction");
  b.extraction = fit_states(traces, params);
  b.logs = build_logs(std::span<const Trace>(traces), b.extraction);
  for (const auto& log : b.logs) b.nets.emplace(log.state, discover(log));
  b.reference = profile_reference(b.logs, b.nets, b.profile_options);
  return b;
}

void save_bundle(const fs::path& dir, const TrainedBundle& b) {
  fs::create_directories(dir / "nets");
  fs::create_directories(dir / "logs");
  {
    auto out = open_out(dir / "detector.json");
    save_model(out, b.detector);
  }
  {
    auto out = open_out(dir / "extraction.json");
    save_params(out, b.extraction);
  }
  json nets = json::array();
  for (const auto& [state, net] : b.nets) {
    auto out = open_out(dir / "nets" / state_file(state, ".pnml"));
    write_pnml(out, net);
    nets.push_back({{"state", state}, {"file", "nets/" + state_file(state, ".pnml")}});
  }
  for (const auto& log : b.logs) {
    auto out = open_out(dir / "logs" / state_file(log.state, ".xes"));
    write_xes(out, log);
  }
  {
    auto out = open_out(dir / "logs" / "logs.jsonl");
    write_logs_jsonl(out, b.logs);
  }
  {
    auto out = open_out(dir / "reference_profile.csv");
    write_profile_csv(out, b.reference);
  }
  const json manifest = {
      {"schema", "pmrate-bundle"},
      {"version", kBundleVersion},
      {"states", b.extraction.k},
      {"detector", "detector.json"},
      {"extraction", "extraction.json"},
      {"nets", nets},
      {"logs", "logs/logs.jsonl"},
      {"reference_profile", "reference_profile.csv"},
      {"bands", b.bands.bounds},
      {"conformance",
       {{"budget", b.profile_options.align.max_expansions},
        {"count_log_moves", b.profile_options.count_log_moves},
        {"count_model_moves", b.profile_options.count_model_moves}}},
      {"fp_pool", b.fp_pool},
  };
  auto out = open_out(dir / "manifest.json");
  out << manifest.dump(1) << '\n';
}

TrainedBundle load_bundle(const fs::path& dir) {
  json m;
  {
    auto in = open_in(dir / "manifest.json");
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("bundle manifest: " + std::string(e.what()));
    }
  }
  if (m.value("schema", "") != "pmrate-bundle") throw ConfigError(dir.string() + " is not a pmrate bundle");
  if (m.value("version", 0) != kBundleVersion) {
    throw ConfigError("bundle version " + m.value("version", json(0)).dump() + " is not supported (expected " +
                      std::to_string(kBundleVersion) + ")");
  }
  TrainedBundle b;
  try {
    {
      auto in = open_in(dir / m.at("detector").get<std::string>());
      b.detector = load_model(in);
    }
    {
      auto in = open_in(dir / m.at("extraction").get<std::string>());
      b.extraction = load_params(in);
    }
    for (const auto& n : m.at("nets")) {
      auto in = open_in(dir / n.at("file").get<std::string>());
      b.nets.emplace(n.at("state").get<StateId>(), read_pnml(in));
    }
    {
      auto in = open_in(dir / m.at("logs").get<std::string>());
      b.logs = read_logs_jsonl(in, b.extraction.k);
    }
    {
      auto in = open_in(dir / m.at("reference_profile").get<std::string>());
      b.reference = read_profile_csv(in);
    }
    const auto bands = m.at("bands").get<std::vector<double>>();
    if (bands.size() != b.bands.bounds.size()) throw DataError("bundle bands need four thresholds");
    std::copy(bands.begin(), bands.end(), b.bands.bounds.begin());
    b.bands.validate();
    const auto& c = m.at("conformance");
    b.profile_options.align.max_expansions = c.at("budget").get<std::size_t>();
    b.profile_options.count_log_moves = c.at("count_log_moves").get<bool>();
    b.profile_options.count_model_moves = c.at("count_model_moves").get<bool>();
    b.fp_pool = m.at("fp_pool").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("bundle manifest: " + std::string(e.what()));
  }
  if (m.at("states").get<std::size_t>() != b.extraction.k) throw DataError("bundle state count mismatch");
  return b;
}

RateOutcome rate_flows(const TrainedBundle& b, std::span<const Flow> flows, const ScoreTable* external) {
  RateOutcome out;
  out.scored = score_flows(b.detector, flows, external);
  std::vector<PositiveFlow> positives;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    if (out.scored[i].predicted == Prediction::Negative) {
      out.false_negatives += flows[i].truth == Truth::Attack;
      continue;
    }
    const Trace trace = to_trace(flows[i]);
    auto ex = explain_flow(split_by_state(trace, b.extraction), b.nets, b.profile_options);
    ex.flow_id = flows[i].id;
    ex.unseen_labels = unseen_labels(trace, b.extraction);
    positives.push_back({flows[i].id, ex.profile, flows[i].truth});
    out.explanations.push_back(std::move(ex));
  }
  out.report = rate_all(b.reference, positives, b.bands);
  return out;
}

void write_rate_outputs(const fs::path& dir, const RateOutcome& o, const TrainedBundle& b) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "scores.csv");
    export_scores(out, o.scored);
  }
  {
    auto out = open_out(dir / "rated_alarms.csv");
    write_rated_csv(out, o.report);
  }
  {
    auto out = open_out(dir / "band_histogram.csv");
    write_band_histogram_csv(out, o.report, b.bands);
  }
  {
    auto out = open_out(dir / "band_profiles.csv");
    write_band_profiles_csv(out, o.report);
  }
  auto out = open_out(dir / "explanations.jsonl");
  for (std::size_t i = 0; i < o.explanations.size(); ++i) {
    json j = to_json(o.explanations[i], b.nets);
    j["cos_sim"] = o.report.alarms[i].cos_sim;
    j["band"] = to_string(o.report.alarms[i].band);
    out << j.dump() << '\n';
  }
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

ExperimentReport aggregate(std::vector<RunResult> runs) {
  ExperimentReport rep;
  rep.runs = std::move(runs);
  for (std::size_t i = 0; i < kBandCount; ++i) {
    const int k = static_cast<int>(i) + 1;
    std::vector<double> tp, fp, recall, precision;
    for (const auto& r : rep.runs) {
      tp.push_back(static_cast<double>(r.confusion.tp[i]));
      fp.push_back(static_cast<double>(r.confusion.fp[i]));
      const auto m = banded_metrics(r.confusion, k);
      if (m.recall) recall.push_back(*m.recall * 100.0);
      if (m.precision) precision.push_back(*m.precision * 100.0);
    }
    rep.rows[i] = {k, mean_std(tp), mean_std(fp), mean_std(recall), mean_std(precision)};
  }
  return rep;
}

ExperimentReport evaluate(std::span<const Flow> flows, const RunConfig& config, const ScoreTable* external,
                          const fs::path* artifacts) {
  config.validate();
  std::vector<const Flow*> normal, attack;
  for (const Flow& f : flows) {
    if (f.truth == Truth::Unknown) throw DataError("flow " + f.id + " has no truth label; evaluation needs labels");
    (f.truth == Truth::Normal ? normal : attack).push_back(&f);
  }
  const auto n = normal.size();
  const auto n_train = static_cast<std::size_t>(std::floor(config.split.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(config.split.validation * static_cast<double>(n)));

  std::vector<RunResult> runs;
  for (std::size_t r = 0; r < config.runs; ++r) {
    RunResult res;
    res.run = r;
    res.seed = sub_seed(config.seed, "run/" + std::to_string(r));
    auto order = normal;
    std::mt19937_64 rng(sub_seed(res.seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Flow> train, validation, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < n_train ? train : i < n_train + n_val ? validation : test).push_back(*order[i]);
    }
    res.train = train.size();
    res.validation = validation.size();
    res.test_normal = test.size();
    for (const Flow* f : attack) test.push_back(*f);
    res.test_attack = attack.size();

    const auto bundle = train_bundle({train, validation}, config, res.seed, external);
    res.fp_pool = bundle.fp_pool.size();
    const auto outcome = rate_flows(bundle, test, external);
    res.confusion = confusion_of(outcome.report, outcome.false_negatives);
    if (artifacts) {
      const auto dir = *artifacts / ("run_" + std::to_string(r));
      save_bundle(dir / "bundle", bundle);
      write_rate_outputs(dir / "rating", outcome, bundle);
    }
    runs.push_back(res);
  }
  return aggregate(std::move(runs));
}

json to_json(const ExperimentReport& rep) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; };
  json runs = json::array();
  for (const auto& r : rep.runs) {
    runs.push_back({{"run", r.run},
                    {"seed", r.seed},
                    {"train", r.train},
                    {"validation", r.validation},
                    {"test_normal", r.test_normal},
                    {"test_attack", r.test_attack},
                    {"fp_pool", r.fp_pool},
                    {"tp", r.confusion.tp},
                    {"fp", r.confusion.fp},
                    {"fn", r.confusion.fn}});
  }
  json rows = json::array();
  for (const auto& row : rep.rows) {
    rows.push_back({{"k", row.k},
                    {"band", to_string(kAllBands[static_cast<std::size_t>(row.k - 1)])},
                    {"tp", ms(row.tp)},
                    {"fp", ms(row.fp)},
                    {"recall_pct", ms(row.recall)},
                    {"precision_pct", ms(row.precision)}});
  }
  return {{"schema", "pmrate-evaluation"}, {"version", 1}, {"runs", runs}, {"bands", rows}};
}

void write_report_csv(std::ostream& out, const ExperimentReport& rep) {
  out << "k,band,tp_mean,tp_std,fp_mean,fp_std,recall_mean,recall_std,recall_runs,precision_mean,"
         "precision_std,precision_runs\n";
  auto cell = [](const MeanStd& m) {
    return m.n == 0 ? std::string(",") : csv::format_double(m.mean) + ',' + csv::format_double(m.std);
  };
  for (auto it = rep.rows.rbegin(); it != rep.rows.rend(); ++it) {
    out << it->k << ',' << to_string(kAllBands[static_cast<std::size_t>(it->k - 1)]) << ',' << cell(it->tp)
        << ',' << cell(it->fp) << ',' << cell(it->recall) << ',' << it->recall.n << ','
        << cell(it->precision) << ',' << it->precision.n << '\n';
  }
}

void print_report(std::ostream& out, const ExperimentReport& rep) {
  auto fmt = [](const MeanStd& m, int digits) {
    if (m.n == 0) return std::string("n/a");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f+-%.*f", digits, m.mean, digits, m.std);
    return std::string(buf);
  };
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-14s %-14s %-16s %-16s\n", "Severity", "TP_k", "FP_k", "Recall_k(%)",
                "Precision_k(%)");
  out << line;
  for (auto it = rep.rows.rbegin(); it != rep.rows.rend(); ++it) {
    const std::string name = std::string(to_string(kAllBands[static_cast<std::size_t>(it->k - 1)])) + " (k=" +
                             std::to_string(it->k) + ")";
    std::snprintf(line, sizeof line, "%-16s %-14s %-14s %-16s %-16s\n", name.c_str(), fmt(it->tp, 0).c_str(),
                  fmt(it->fp, 0).c_str(), fmt(it->recall, 2).c_str(), fmt(it->precision, 2).c_str());
    out << line;
  }
}

std::vector<Flow> load_flows(const RunConfig& config) {
  if (config.corpus && !config.pcaps.empty()) throw ConfigError("give either a corpus or PCAP files, not both");
  if (config.corpus) return load_corpus(*config.corpus);
  if (config.pcaps.empty()) throw ConfigError("no input: set input.corpus or input.pcaps");
  std::vector<PacketRecord> packets;
  CaptureFilter filter;
  filter.server_ports = config.server_ports;
  for (const auto& p : config.pcaps) {
    auto r = ingest_pcap(p, filter);
    if (r.partial) std::fprintf(stderr, "warning: %s: %s; kept packets read so far\n", p.string().c_str(), r.error.c_str());
    packets.insert(packets.end(), r.packets.begin(), r.packets.end());
  }
  std::stable_sort(packets.begin(), packets.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
  FlowMeterConfig meter;
  meter.idle_timeout = config.flow_timeout;
  return assemble_flows(packets, meter);
}

}  // namespace pmrate
