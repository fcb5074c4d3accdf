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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pmrate/flow.hpp"

namespace pmrate {

enum class DetectorKind : std::uint8_t { ReconstructionBaseline, ExternalScores };

enum class Prediction : std::uint8_t { Negative, Positive };

/// Linear reconstruction detector: z-score the features with training
/// statistics, project onto the top principal directions and back, and score
/// by squared reconstruction error. Constant training columns are masked out.
struct DetectorModel {
  DetectorKind kind = DetectorKind::ReconstructionBaseline;
  std::size_t dimension = 0;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> active;  // false for masked constant columns
  /// Row-major, components x active-dimension, orthonormal rows.
  std::vector<std::vector<double>> basis;
  std::optional<double> threshold;
  std::uint64_t seed = 0;
  std::size_t requested_components = 0;
  double percentile = 0.0;

  std::size_t active_count() const;
};

struct ScoredFlow {
  std::string flow_id;
  double score = 0.0;
  Prediction predicted = Prediction::Negative;
  Truth truth = Truth::Unknown;
};

/// Ties are negative: an alarm needs a score strictly above the threshold.
inline Prediction decide(double score, double threshold) {
  return score > threshold ? Prediction::Positive : Prediction::Negative;
}

DetectorModel fit_baseline(std::span<const FeatureVector> train, std::size_t components,
                           std::uint64_t seed);

double score(const DetectorModel& model, const FeatureVector& x);

/// Nearest-rank percentile: the ceil(p*n)-th smallest value, 0 < p <= 1.
double nearest_rank(std::vector<double> values, double percentile);

DetectorModel calibrate_threshold(DetectorModel model,
                                  std::span<const FeatureVector> validation,
                                  double percentile);

std::vector<ScoredFlow> classify(const DetectorModel& model,
                                 std::span<const FeatureVector> features);
std::vector<ScoredFlow> classify(const DetectorModel& model, std::span<const Flow> flows);

struct ScoreImport {
  std::vector<ScoredFlow> scored;
  std::vector<std::string> unknown_ids;  // rows skipped at join time
};

/// Reads a CSV with a header containing flow_id and score, plus an optional
/// truth column. When `known_ids` is given, rows naming other flows are
/// skipped and reported.
ScoreImport import_scores(std::istream& in, double threshold,
                          const std::set<std::string>* known_ids = nullptr);
ScoreImport import_scores(const std::filesystem::path& path, double threshold,
                          const std::set<std::string>* known_ids = nullptr);

void export_scores(std::ostream& out, std::span<const ScoredFlow> scored);

// Model files are JSON: {"schema":"pmrate-detector","version":1, ...}.
void save_model(std::ostream& out, const DetectorModel& model);
DetectorModel load_model(std::istream& in);

}  // namespace pmrate
