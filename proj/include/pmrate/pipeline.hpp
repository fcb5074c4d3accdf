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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmrate/config.hpp"
#include "pmrate/conformance.hpp"
#include "pmrate/detector.hpp"
#include "pmrate/events.hpp"
#include "pmrate/rating.hpp"

namespace pmrate {

inline constexpr int kBundleVersion = 1;

/// flow_id -> anomaly score from an external detector.
using ScoreTable = std::map<std::string, double>;

ScoreTable read_score_table(const std::filesystem::path& path);

/// Everything the inference phase needs.
struct TrainedBundle {
  DetectorModel detector;
  ExtractionParams extraction;
  std::vector<StateEventLog> logs;
  NetSet nets;
  AlignmentProfile reference;
  BandThresholds bands;
  ProfileOptions profile_options;
  std::vector<std::string> fp_pool;  // validation flows flagged by the detector
};

struct TrainSplit {
  std::span<const Flow> train;
  std::span<const Flow> validation;
};

/// Detector fit and calibration, false-positive pool, state fitting,
/// discovery and the reference profile. With `external`, the detector is
/// replaced by the imported scores and only the threshold is calibrated.
TrainedBundle train_bundle(const TrainSplit& split, const RunConfig& config, std::uint64_t seed,
                           const ScoreTable* external = nullptr);

void save_bundle(const std::filesystem::path& dir, const TrainedBundle& bundle);
TrainedBundle load_bundle(const std::filesystem::path& dir);

struct RateOutcome {
  std::vector<ScoredFlow> scored;               // every input flow
  RatingReport report;                          // positives only
  std::vector<FlowExplanation> explanations;    // parallel to report.alarms
  std::size_t false_negatives = 0;              // attack flows left negative
};

RateOutcome rate_flows(const TrainedBundle& bundle, std::span<const Flow> flows,
                       const ScoreTable* external = nullptr);

void write_rate_outputs(const std::filesystem::path& dir, const RateOutcome& outcome,
                        const TrainedBundle& bundle);

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t train = 0, validation = 0, test_normal = 0, test_attack = 0, fp_pool = 0;
  BandedConfusion confusion;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

struct BandRow {
  int k = 0;
  MeanStd tp, fp, recall, precision;  // tp and fp are per-band counts
};

struct ExperimentReport {
  std::vector<RunResult> runs;
  std::array<BandRow, kBandCount> rows;
};

/// Repeats train + rate over seeded splits of the labelled flows. When
/// `artifacts` is set, each run's bundle and ratings go to artifacts/run_<i>.
ExperimentReport evaluate(std::span<const Flow> flows, const RunConfig& config,
                          const ScoreTable* external = nullptr,
                          const std::filesystem::path* artifacts = nullptr);

ExperimentReport aggregate(std::vector<RunResult> runs);

nlohmann::json to_json(const ExperimentReport& report);
void write_report_csv(std::ostream& out, const ExperimentReport& report);
/// Fixed-width text table, one line per band, most lenient band first.
void print_report(std::ostream& out, const ExperimentReport& report);

/// Flows from the configured inputs: corpus directory or PCAP files.
std::vector<Flow> load_flows(const RunConfig& config);

}  // namespace pmrate
