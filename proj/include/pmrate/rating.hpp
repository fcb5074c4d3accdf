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
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmrate/conformance.hpp"
#include "pmrate/flow.hpp"

namespace pmrate {

/// Ordinal 1 is the most severe band.
enum class SeverityBand : std::uint8_t { VeryHigh = 1, High = 2, Medium = 3, Low = 4, VeryLow = 5 };

inline constexpr std::size_t kBandCount = 5;
inline constexpr std::array<SeverityBand, kBandCount> kAllBands = {
    SeverityBand::VeryHigh, SeverityBand::High, SeverityBand::Medium, SeverityBand::Low,
    SeverityBand::VeryLow};

inline int ordinal(SeverityBand b) { return static_cast<int>(b); }
std::string_view to_string(SeverityBand b);
SeverityBand parse_band(std::string_view name);

/// Inner boundaries between consecutive bands. Band i covers
/// [bounds[i-2], bounds[i-1]) with 0 and 1 as outer ends; the last band is
/// closed at 1.
struct BandThresholds {
  std::array<double, kBandCount - 1> bounds = {0.01, 0.25, 0.75, 0.99};

  void validate() const;
  double lower(SeverityBand b) const;
  double upper(SeverityBand b) const;
};

/// Cosine similarity over the union alphabet, with both-zero and zero-flow
/// cases mapping to 1 and a zero reference against a non-zero flow to 0.
double cos_sim(const AlignmentProfile& reference, const AlignmentProfile& flow);

SeverityBand to_band(double score, const BandThresholds& thresholds = {});

struct PositiveFlow {
  std::string flow_id;
  AlignmentProfile profile;
  Truth truth = Truth::Unknown;
};

struct RatedAlarm {
  std::string flow_id;
  double cos_sim = 0.0;
  SeverityBand band = SeverityBand::VeryHigh;
  AlignmentProfile profile;
  Truth truth = Truth::Unknown;
};

struct RatingReport {
  std::vector<RatedAlarm> alarms;
  std::array<std::size_t, kBandCount> histogram{};
};

RatingReport rate_all(const AlignmentProfile& reference, std::span<const PositiveFlow> positives,
                      const BandThresholds& thresholds = {});

struct BandedConfusion {
  std::array<std::size_t, kBandCount> tp{};
  std::array<std::size_t, kBandCount> fp{};
  std::size_t fn = 0;

  friend bool operator==(const BandedConfusion&, const BandedConfusion&) = default;
};

/// Alarms with unknown truth are left out.
BandedConfusion confusion_of(const RatingReport& report, std::size_t false_negatives);

struct BandedMetrics {
  std::optional<double> recall;     // absent without any attack flow
  std::optional<double> precision;  // absent without any kept alarm
};

BandedMetrics banded_metrics(const BandedConfusion& confusion, int k);

void write_rated_csv(std::ostream& out, const RatingReport& report);
void write_band_histogram_csv(std::ostream& out, const RatingReport& report,
                              const BandThresholds& thresholds = {});
/// Mean alarm profile per band, long format (band,k,event_type,mean).
void write_band_profiles_csv(std::ostream& out, const RatingReport& report);

}  // namespace pmrate
