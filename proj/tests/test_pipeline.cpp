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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pmrate/config.hpp"
#include "pmrate/error.hpp"
#include "pmrate/pipeline.hpp"
#include "pmrate/synthetic.hpp"

using namespace pmrate;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pmrate_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    ++files;
  }
  return files > 0;
}

struct Corpus {
  std::vector<Flow> normal = generate_flows(TrafficProfile::Normal, 160, 21);
  std::vector<Flow> attack = generate_flows(TrafficProfile::Slowloris, 60, 22);
  std::span<const Flow> train() const { return std::span(normal).first(80); }
  std::span<const Flow> validation() const { return std::span(normal).subspan(80, 40); }
  std::span<const Flow> test_normal() const { return std::span(normal).subspan(120); }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

}  // namespace

TEST_CASE("config overlay, validation and round trip") {
  const auto j = nlohmann::json::parse(R"({"detector":{"percentile":0.9},"extraction":{"k":3},"runs":2})");
  const auto c = apply_json(j);
  CHECK(c.percentile == 0.9);
  CHECK(c.k == 3);
  CHECK(c.window == 3);
  CHECK(c.runs == 2);
  CHECK(apply_json(to_json(c)).percentile == 0.9);
  CHECK(to_json(apply_json(to_json(c))) == to_json(c));

  CHECK_THROWS_AS(apply_json(nlohmann::json::parse(R"({"detectr":{}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(nlohmann::json::parse(R"({"runs":"five"})")), ConfigError);
  RunConfig bad;
  bad.split = {0.7, 0.4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.runs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.window = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sub-seeds are stable and stage-specific") {
  CHECK(sub_seed(7, "split") == sub_seed(7, "split"));
  CHECK(sub_seed(7, "split") != sub_seed(7, "detector"));
  CHECK(sub_seed(7, "split") != sub_seed(8, "split"));
}

TEST_CASE("mean and sample standard deviation") {
  // Three runs at 100% and two at 0 give 60 +- 54.77.
  const std::vector<double> v{100, 100, 100, 0, 0};
  const auto m = mean_std(v);
  CHECK(m.mean == 60.0);
  CHECK(m.std == doctest::Approx(54.77).epsilon(1e-4));
  CHECK(mean_std(std::vector<double>{42.0}).std == 0.0);
}

TEST_CASE("training builds a complete bundle") {
  const auto& c = corpus();
  RunConfig cfg;
  const auto b = train_bundle({c.train(), c.validation()}, cfg, 5);
  CHECK(b.nets.size() == 2);
  CHECK(b.logs.size() == 2);
  CHECK_FALSE(b.fp_pool.empty());
  CHECK(b.fp_pool.size() <= 40);
  CHECK(b.extraction.fitted());
  for (const auto& [state, net] : b.nets) {
    CHECK(check_workflow_shape(net).ok);
    CHECK(net.name() == "state_" + std::to_string(state));
  }
  // Discovered nets replay their own logs, so nothing deviates on average.
  CHECK(b.reference.is_zero());

  SUBCASE("same seed, byte-identical bundle") {
    const auto d1 = scratch("bundle_a"), d2 = scratch("bundle_b");
    save_bundle(d1, b);
    save_bundle(d2, train_bundle({c.train(), c.validation()}, cfg, 5));
    CHECK(same_tree(d1, d2));
    CHECK(fs::exists(d1 / "nets" / "state_1.pnml"));
    CHECK(fs::exists(d1 / "logs" / "state_0.xes"));

    const auto back = load_bundle(d1);
    CHECK(back.fp_pool == b.fp_pool);
    CHECK(back.extraction.centroids == b.extraction.centroids);
    CHECK(back.detector.threshold == b.detector.threshold);
    for (const auto& [state, net] : b.nets) CHECK(same_structure(back.nets.at(state), net));

    auto manifest = nlohmann::json::parse(slurp(d1 / "manifest.json"));
    manifest["version"] = 99;
    std::ofstream(d1 / "manifest.json") << manifest.dump();
    CHECK_THROWS_AS(load_bundle(d1), ConfigError);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
}

TEST_CASE("a percentile of 1 leaves no false positives to learn from") {
  const auto& c = corpus();
  RunConfig cfg;
  cfg.percentile = 1.0;
  CHECK_THROWS_AS(train_bundle({c.train(), c.validation()}, cfg, 5), DataError);
}

TEST_CASE("rating leaves negatives alone and separates the synthetic attack") {
  const auto& c = corpus();
  const auto b = train_bundle({c.train(), c.validation()}, RunConfig{}, 9);
  std::vector<Flow> test(c.test_normal().begin(), c.test_normal().end());
  test.insert(test.end(), c.attack.begin(), c.attack.end());

  const auto o = rate_flows(b, test);
  const auto direct = classify(b.detector, std::span<const Flow>(test));
  REQUIRE(o.scored.size() == test.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(o.scored[i].predicted == direct[i].predicted);
    CHECK(o.scored[i].score == direct[i].score);
    positives += o.scored[i].predicted == Prediction::Positive;
  }
  CHECK(o.report.alarms.size() == positives);
  CHECK(o.explanations.size() == positives);

  const auto conf = confusion_of(o.report, o.false_negatives);
  const auto m4 = banded_metrics(conf, 4);
  REQUIRE(m4.recall);
  REQUIRE(m4.precision);
  CHECK(*m4.recall >= 0.95);
  CHECK(*m4.precision >= 0.95);
  std::size_t attack_severe = 0, attack_alarms = 0;
  for (const auto& a : o.report.alarms) {
    if (a.truth != Truth::Attack) continue;
    ++attack_alarms;
    attack_severe += ordinal(a.band) <= 3;
    // Deviations concentrate on the client push trickle.
    CHECK(a.profile.at("C_to_S_ACK+PSH") > 0);
  }
  CHECK(attack_severe == attack_alarms);

  SUBCASE("a permissive threshold raises no alarm on benign traffic") {
    auto loose = b;
    loose.detector.threshold = 1e300;
    const auto quiet = rate_flows(loose, c.test_normal());
    CHECK(quiet.report.alarms.empty());
    CHECK(quiet.false_negatives == 0);
  }

  SUBCASE("outputs") {
    const auto dir = scratch("rate");
    write_rate_outputs(dir, o, b);
    for (const char* f : {"scores.csv", "rated_alarms.csv", "band_histogram.csv", "band_profiles.csv",
                          "explanations.jsonl"}) {
      CHECK(fs::file_size(dir / f) > 0);
    }
    std::ifstream ex(dir / "explanations.jsonl");
    std::string line;
    std::getline(ex, line);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("fragments"));
    CHECK(j.contains("band"));
    fs::remove_all(dir);
  }
}

TEST_CASE("external scores replace the baseline detector") {
  const auto& c = corpus();
  ScoreTable scores;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& f : c.normal) scores[f.id] = u(rng);
  for (const auto& f : c.attack) scores[f.id] = 5 + u(rng);
  const auto b = train_bundle({c.train(), c.validation()}, RunConfig{}, 2, &scores);
  CHECK(b.detector.kind == DetectorKind::ExternalScores);
  REQUIRE(b.detector.threshold);
  CHECK(*b.detector.threshold < 1.0);
  const auto o = rate_flows(b, c.attack, &scores);
  CHECK(o.report.alarms.size() == c.attack.size());
  CHECK_THROWS_AS(rate_flows(b, c.attack), ConfigError);
  ScoreTable partial = scores;
  partial.erase(c.attack.front().id);
  CHECK_THROWS_AS(rate_flows(b, c.attack, &partial), DataError);
}

TEST_CASE("evaluation is reproducible and needs labels") {
  std::vector<Flow> flows = corpus().normal;
  flows.insert(flows.end(), corpus().attack.begin(), corpus().attack.end());
  RunConfig cfg;
  cfg.runs = 2;
  const auto a = evaluate(flows, cfg);
  const auto b = evaluate(flows, cfg);
  CHECK(to_json(a) == to_json(b));
  REQUIRE(a.runs.size() == 2);
  CHECK(a.runs[0].seed != a.runs[1].seed);
  CHECK(a.runs[0].test_attack == 60);
  CHECK(a.runs[0].train + a.runs[0].validation + a.runs[0].test_normal == 160);
  CHECK(a.rows[4].recall.mean == 100.0);  // k = 5 keeps every alarm

  cfg.runs = 1;
  const auto one = evaluate(flows, cfg);
  for (const auto& row : one.rows) {
    CHECK(row.tp.std == 0.0);
    CHECK(row.fp.std == 0.0);
  }

  std::ostringstream csv, text;
  write_report_csv(csv, a);
  print_report(text, a);
  CHECK(csv.str().rfind("k,band,tp_mean", 0) == 0);
  CHECK(text.str().find("VeryLow (k=5)") != std::string::npos);

  flows.front().truth = Truth::Unknown;
  CHECK_THROWS_AS(evaluate(flows, cfg), DataError);
}
