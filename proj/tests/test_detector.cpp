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

#include <doctest.h>

#include <random>
#include <sstream>

#include "pmrate/detector.hpp"
#include "pmrate/error.hpp"

using namespace pmrate;

namespace {

std::vector<FeatureVector> random_features(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FeatureVector> out(n, FeatureVector(dim));
  for (auto& x : out) {
    const double shared = g(rng);
    for (std::size_t j = 0; j < dim; ++j) x[j] = 10.0 + 3.0 * shared * double(j) + g(rng);
  }
  return out;
}

std::string model_bytes(const DetectorModel& m) {
  std::ostringstream os;
  save_model(os, m);
  return os.str();
}

}  // namespace

TEST_CASE("full-rank projection reconstructs training data") {
  const auto train = random_features(50, 6, 1);
  const auto model = fit_baseline(train, 6, 0);
  for (const auto& x : train) CHECK(score(model, x) < 1e-9);
}

TEST_CASE("collinear 2-D data with one component") {
  std::vector<FeatureVector> line;
  for (int t = 0; t < 10; ++t) line.push_back({double(t), 2.0 * t + 1.0});
  const auto model = fit_baseline(line, 1, 0);
  CHECK(score(model, {3.5, 8.0}) < 1e-9);
  CHECK(score(model, {-4.0, -7.0}) < 1e-9);
  CHECK(score(model, {5.0, 0.0}) > 1.0);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  const auto train = random_features(40, 5, 3);
  CHECK(model_bytes(fit_baseline(train, 2, 42)) == model_bytes(fit_baseline(train, 2, 42)));
}

TEST_CASE("constant columns are masked") {
  auto train = random_features(30, 4, 5);
  for (auto& x : train) x[2] = 7.0;
  const auto model = fit_baseline(train, 2, 0);
  CHECK_FALSE(model.active[2]);
  CHECK(model.active_count() == 3);
  // The masked column does not influence the score.
  auto probe = train[0];
  const double s0 = score(model, probe);
  probe[2] = 1e6;
  CHECK(score(model, probe) == doctest::Approx(s0));
}

TEST_CASE("fit preconditions") {
  const auto train = random_features(3, 4, 5);
  CHECK_THROWS_AS(fit_baseline(train, 3, 0), DataError);
  CHECK_THROWS_AS(fit_baseline(train, 0, 0), ConfigError);
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> xs;
  for (int i = 100; i >= 1; --i) xs.push_back(i);
  CHECK(nearest_rank(xs, 0.90) == 90);
  CHECK(nearest_rank(xs, 1.0) == 100);
  CHECK(nearest_rank(xs, 0.001) == 1);
  CHECK_THROWS_AS(nearest_rank(xs, 0.0), ConfigError);
  CHECK_THROWS_AS(nearest_rank(xs, 1.5), ConfigError);
  CHECK_THROWS_AS(nearest_rank({}, 0.5), DataError);
}

TEST_CASE("calibration on 136 validation flows at 0.85 leaves 20 false positives") {
  const auto train = random_features(200, 6, 11);
  const auto validation = random_features(136, 6, 12);
  const auto model = calibrate_threshold(fit_baseline(train, 2, 0), validation, 0.85);
  REQUIRE(model.threshold);
  // Oracle: ceil(0.85 * 136) = 116, so the 20 largest scores exceed it.
  std::size_t above = 0;
  for (const auto& s : classify(model, std::span<const FeatureVector>(validation))) {
    above += s.predicted == Prediction::Positive;
  }
  CHECK(above == 20);
  CHECK(model.percentile == 0.85);
  CHECK(*model.threshold >= 0.0);
}

TEST_CASE("percentile 1.0 yields no validation positives") {
  const auto train = random_features(100, 5, 21);
  const auto validation = random_features(50, 5, 22);
  const auto model = calibrate_threshold(fit_baseline(train, 2, 0), validation, 1.0);
  for (const auto& s : classify(model, std::span<const FeatureVector>(validation))) {
    CHECK(s.predicted == Prediction::Negative);
  }
}

TEST_CASE("calibration rejects tiny validation sets") {
  const auto train = random_features(100, 5, 21);
  const auto model = fit_baseline(train, 2, 0);
  CHECK_THROWS_AS(calibrate_threshold(model, {}, 0.9), DataError);
  const auto few = random_features(9, 5, 2);
  CHECK_THROWS_AS(calibrate_threshold(model, few, 0.9), DataError);
}

TEST_CASE("tie at the threshold is negative") {
  CHECK(decide(2.0, 2.0) == Prediction::Negative);
  CHECK(decide(2.0000001, 2.0) == Prediction::Positive);
  CHECK(decide(1.0, 2.0) == Prediction::Negative);
}

TEST_CASE("classify rejects uncalibrated models and dimension mismatches") {
  const auto train = random_features(30, 4, 8);
  auto model = fit_baseline(train, 1, 0);
  CHECK_THROWS_AS(classify(model, std::span<const FeatureVector>(train)), ConfigError);
  model.threshold = 1.0;
  const std::vector<FeatureVector> wrong = {{1.0, 2.0}};
  try {
    classify(model, std::span<const FeatureVector>(wrong));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("masked columns") != std::string::npos);
  }
}

TEST_CASE("property: raising the threshold never adds positives") {
  const auto train = random_features(80, 5, 31);
  const auto probe = random_features(60, 5, 32);
  auto model = fit_baseline(train, 2, 0);
  std::size_t previous = probe.size() + 1;
  for (double t = 0.0; t < 50.0; t += 0.5) {
    model.threshold = t;
    std::size_t positives = 0;
    for (const auto& s : classify(model, std::span<const FeatureVector>(probe))) {
      positives += s.predicted == Prediction::Positive;
    }
    CHECK(positives <= previous);
    previous = positives;
  }
}

TEST_CASE("property: affine rescaling of a raw column leaves scores unchanged") {
  const auto train = random_features(80, 5, 41);
  const auto probe = random_features(20, 5, 42);
  const auto base = fit_baseline(train, 2, 0);
  for (std::size_t col = 0; col < 5; ++col) {
    for (auto [a, b] : {std::pair{3.0, 10.0}, std::pair{-0.5, 2.0}, std::pair{1000.0, -7.0}}) {
      auto scaled_train = train;
      auto scaled_probe = probe;
      for (auto& x : scaled_train) x[col] = a * x[col] + b;
      for (auto& x : scaled_probe) x[col] = a * x[col] + b;
      const auto scaled = fit_baseline(scaled_train, 2, 0);
      for (std::size_t i = 0; i < probe.size(); ++i) {
        CHECK(std::abs(score(scaled, scaled_probe[i]) - score(base, probe[i])) < 1e-9);
      }
    }
  }
}

TEST_CASE("model persistence round trip") {
  const auto train = random_features(40, 5, 51);
  auto model = calibrate_threshold(fit_baseline(train, 3, 9), train, 0.8);
  std::stringstream ss;
  save_model(ss, model);
  const auto back = load_model(ss);
  CHECK(model_bytes(back) == model_bytes(model));
  for (const auto& x : train) CHECK(score(back, x) == score(model, x));

  std::istringstream junk("{\"schema\":\"other\"}");
  CHECK_THROWS_AS(load_model(junk), DataError);
}

TEST_CASE("import scores applies the same decision rule") {
  std::istringstream in("flow_id,score,truth\na,0.5,normal\nb,1.5,attack\nc,1.0,normal\n");
  const auto r = import_scores(in, 1.0);
  REQUIRE(r.scored.size() == 3);
  CHECK(r.scored[0].predicted == Prediction::Negative);
  CHECK(r.scored[1].predicted == Prediction::Positive);
  CHECK(r.scored[2].predicted == Prediction::Negative);
  CHECK(r.scored[1].truth == Truth::Attack);
}

TEST_CASE("import scores schema errors and unknown ids") {
  std::istringstream no_score("flow_id,value\na,1\n");
  CHECK_THROWS_AS(import_scores(no_score, 1.0), DataError);
  std::istringstream bad_number("flow_id,score\na,abc\n");
  CHECK_THROWS_AS(import_scores(bad_number, 1.0), DataError);

  std::istringstream in("flow_id,score\na,2\nzz,3\n");
  const std::set<std::string> known = {"a", "b"};
  const auto r = import_scores(in, 1.0, &known);
  CHECK(r.scored.size() == 1);
  REQUIRE(r.unknown_ids.size() == 1);
  CHECK(r.unknown_ids[0] == "zz");
}

TEST_CASE("exported scores re-import to identical predictions") {
  const auto train = random_features(60, 5, 61);
  const auto probe = random_features(40, 5, 62);
  const auto model = calibrate_threshold(fit_baseline(train, 2, 0), train, 0.85);
  const auto scored = classify(model, std::span<const FeatureVector>(probe));
  std::stringstream ss;
  export_scores(ss, scored);
  const auto back = import_scores(ss, *model.threshold);
  REQUIRE(back.scored.size() == scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    CHECK(back.scored[i].flow_id == scored[i].flow_id);
    CHECK(back.scored[i].score == scored[i].score);
    CHECK(back.scored[i].predicted == scored[i].predicted);
  }
}
