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

#include "pmrate/rating.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "pmrate/csv.hpp"
#include "pmrate/error.hpp"

namespace pmrate {

namespace {

constexpr std::array<std::string_view, kBandCount> kNames = {"VeryHigh", "High", "Medium", "Low",
                                                             "VeryLow"};

void check_non_negative(const AlignmentProfile& p, std::string_view which) {
  for (const auto& [label, v] : p.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DataError(std::string(which) + " profile has invalid entry for " + label);
    }
  }
}

}  // namespace

std::string_view to_string(SeverityBand b) { return kNames.at(static_cast<std::size_t>(ordinal(b) - 1)); }

SeverityBand parse_band(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return kAllBands[i];
  }
  throw DataError("unknown severity band " + std::string(name));
}

void BandThresholds::validate() const {
  double prev = 0.0;
  for (double b : bounds) {
    if (!(b > prev) || !(b < 1.0)) {
      throw ConfigError("band thresholds must increase strictly inside (0, 1)");
    }
    prev = b;
  }
}

double BandThresholds::lower(SeverityBand b) const {
  const int i = ordinal(b);
  return i == 1 ? 0.0 : bounds[static_cast<std::size_t>(i - 2)];
}

double BandThresholds::upper(SeverityBand b) const {
  const int i = ordinal(b);
  return i == static_cast<int>(kBandCount) ? 1.0 : bounds[static_cast<std::size_t>(i - 1)];
}

double cos_sim(const AlignmentProfile& reference, const AlignmentProfile& flow) {
  check_non_negative(reference, "reference");
  check_non_negative(flow, "flow");
  double dot = 0.0, nr = 0.0, nf = 0.0;
  for (const auto& [label, v] : reference.values) {
    nr += v * v;
    dot += v * flow.at(label);
  }
  for (const auto& [label, v] : flow.values) nf += v * v;
  if (nf == 0.0) return 1.0;
  if (nr == 0.0) return 0.0;
  // One square root keeps identical vectors at exactly 1.
  const double prod = nr * nf;
  const double norm = std::isfinite(prod) ? std::sqrt(prod) : std::sqrt(nr) * std::sqrt(nf);
  return std::clamp(dot / norm, 0.0, 1.0);
}

SeverityBand to_band(double score, const BandThresholds& thresholds) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw DataError("similarity score outside [0, 1]: " + csv::format_double(score));
  }
  for (std::size_t i = 0; i < thresholds.bounds.size(); ++i) {
    if (score < thresholds.bounds[i]) return kAllBands[i];
  }
  return SeverityBand::VeryLow;
}

RatingReport rate_all(const AlignmentProfile& reference, std::span<const PositiveFlow> positives,
                      const BandThresholds& thresholds) {
  thresholds.validate();
  RatingReport report;
  report.alarms.reserve(positives.size());
  for (const auto& p : positives) {
    RatedAlarm a;
    a.flow_id = p.flow_id;
    a.cos_sim = cos_sim(reference, p.profile);
    a.band = to_band(a.cos_sim, thresholds);
    a.profile = p.profile;
    a.truth = p.truth;
    ++report.histogram[static_cast<std::size_t>(ordinal(a.band) - 1)];
    report.alarms.push_back(std::move(a));
  }
  return report;
}

BandedConfusion confusion_of(const RatingReport& report, std::size_t false_negatives) {
  BandedConfusion c;
  c.fn = false_negatives;
  for (const auto& a : report.alarms) {
    const auto i = static_cast<std::size_t>(ordinal(a.band) - 1);
    if (a.truth == Truth::Attack) ++c.tp[i];
    if (a.truth == Truth::Normal) ++c.fp[i];
  }
  return c;
}

BandedMetrics banded_metrics(const BandedConfusion& confusion, int k) {
  if (k < 1 || k > static_cast<int>(kBandCount)) throw ConfigError("band index k must be in 1..5");
  std::size_t tp_in = 0, tp_out = 0, fp_in = 0;
  for (std::size_t i = 0; i < kBandCount; ++i) {
    if (static_cast<int>(i) < k) {
      tp_in += confusion.tp[i];
      fp_in += confusion.fp[i];
    } else {
      tp_out += confusion.tp[i];
    }
  }
  BandedMetrics m;
  if (const auto d = tp_in + tp_out + confusion.fn; d > 0) {
    m.recall = static_cast<double>(tp_in) / static_cast<double>(d);
  }
  if (const auto d = tp_in + fp_in; d > 0) {
    m.precision = static_cast<double>(tp_in) / static_cast<double>(d);
  }
  return m;
}

void write_rated_csv(std::ostream& out, const RatingReport& report) {
  out << "flow_id,cos_sim,band,k,truth\n";
  for (const auto& a : report.alarms) {
    out << csv::escape(a.flow_id) << ',' << csv::format_double(a.cos_sim) << ',' << to_string(a.band)
        << ',' << ordinal(a.band) << ',' << to_string(a.truth) << '\n';
  }
}

void write_band_histogram_csv(std::ostream& out, const RatingReport& report,
                              const BandThresholds& thresholds) {
  std::array<std::size_t, kBandCount> tp{}, fp{};
  for (const auto& a : report.alarms) {
    const auto i = static_cast<std::size_t>(ordinal(a.band) - 1);
    tp[i] += a.truth == Truth::Attack;
    fp[i] += a.truth == Truth::Normal;
  }
  out << "band,k,lower,upper,alarms,attack,normal\n";
  for (std::size_t i = 0; i < kBandCount; ++i) {
    const auto b = kAllBands[i];
    out << to_string(b) << ',' << ordinal(b) << ',' << csv::format_double(thresholds.lower(b)) << ','
        << csv::format_double(thresholds.upper(b)) << ',' << report.histogram[i] << ',' << tp[i] << ','
        << fp[i] << '\n';
  }
}

void write_band_profiles_csv(std::ostream& out, const RatingReport& report) {
  std::array<std::map<EventLabel, double>, kBandCount> sums;
  for (const auto& a : report.alarms) {
    auto& s = sums[static_cast<std::size_t>(ordinal(a.band) - 1)];
    for (const auto& [label, v] : a.profile.values) s[label] += v;
  }
  out << "band,k,event_type,mean\n";
  for (std::size_t i = 0; i < kBandCount; ++i) {
    const auto n = static_cast<double>(report.histogram[i]);
    for (const auto& [label, v] : sums[i]) {
      out << to_string(kAllBands[i]) << ',' << i + 1 << ',' << csv::escape(label) << ','
          << csv::format_double(v / n) << '\n';
    }
  }
}

}  // namespace pmrate
