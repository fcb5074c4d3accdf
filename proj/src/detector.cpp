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

#include "pmrate/detector.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "pmrate/csv.hpp"
#include "pmrate/error.hpp"

namespace pmrate {
namespace {

constexpr double kConstantColumnTol = 1e-12;

std::string mask_summary(const DetectorModel& m) {
  std::string masked;
  for (std::size_t j = 0; j < m.active.size(); ++j) {
    if (!m.active[j]) {
      if (!masked.empty()) masked += ',';
      masked += std::to_string(j);
    }
  }
  return "dimension " + std::to_string(m.dimension) + ", masked columns [" + masked + "]";
}

Eigen::VectorXd normalized(const DetectorModel& m, const FeatureVector& x) {
  if (x.size() != m.dimension) {
    throw DataError("feature vector has " + std::to_string(x.size()) +
                    " entries but the detector expects " + mask_summary(m));
  }
  Eigen::VectorXd z(static_cast<Eigen::Index>(m.active_count()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < m.dimension; ++j) {
    if (!m.active[j]) continue;
    z[k++] = (x[j] - m.mean[j]) / m.stddev[j];
  }
  return z;
}

}  // namespace

std::size_t DetectorModel::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

DetectorModel fit_baseline(std::span<const FeatureVector> train, std::size_t components,
                           std::uint64_t seed) {
  if (components < 1) throw ConfigError("detector needs at least one component");
  if (train.size() <= components) {
    throw DataError("detector training set (" + std::to_string(train.size()) +
                    " flows) must be larger than the component count (" +
                    std::to_string(components) + ")");
  }
  DetectorModel m;
  m.seed = seed;
  m.requested_components = components;
  m.dimension = train.front().size();
  const auto n = static_cast<double>(train.size());
  m.mean.assign(m.dimension, 0.0);
  m.stddev.assign(m.dimension, 0.0);
  m.active.assign(m.dimension, false);
  for (const FeatureVector& x : train) {
    if (x.size() != m.dimension) throw DataError("ragged training feature vectors");
    for (std::size_t j = 0; j < m.dimension; ++j) {
      if (!std::isfinite(x[j])) throw DataError("non-finite training feature");
      m.mean[j] += x[j];
    }
  }
  for (double& v : m.mean) v /= n;
  for (const FeatureVector& x : train) {
    for (std::size_t j = 0; j < m.dimension; ++j) {
      m.stddev[j] += (x[j] - m.mean[j]) * (x[j] - m.mean[j]);
    }
  }
  for (std::size_t j = 0; j < m.dimension; ++j) {
    m.stddev[j] = std::sqrt(m.stddev[j] / n);
    m.active[j] = m.stddev[j] > kConstantColumnTol * std::max(1.0, std::abs(m.mean[j]));
    if (!m.active[j]) m.stddev[j] = 1.0;
  }
  const auto dims = static_cast<Eigen::Index>(m.active_count());
  if (dims == 0) throw DataError("every training feature column is constant");

  Eigen::MatrixXd z(static_cast<Eigen::Index>(train.size()), dims);
  for (std::size_t i = 0; i < train.size(); ++i) {
    z.row(static_cast<Eigen::Index>(i)) = normalized(m, train[i]).transpose();
  }
  const Eigen::MatrixXd cov = (z.transpose() * z) / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("eigen decomposition failed");

  // Eigenvalues come back ascending; keep the top directions.
  const Eigen::Index keep = std::min<Eigen::Index>(static_cast<Eigen::Index>(components), dims);
  for (Eigen::Index c = 0; c < keep; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(dims - 1 - c);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v[pivot] < 0) v = -v;
    m.basis.emplace_back(v.data(), v.data() + v.size());
  }
  return m;
}

double score(const DetectorModel& model, const FeatureVector& x) {
  if (model.kind != DetectorKind::ReconstructionBaseline) {
    throw ConfigError("externally scored detector cannot score feature vectors");
  }
  const Eigen::VectorXd z = normalized(model, x);
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(z.size());
  for (const auto& row : model.basis) {
    const Eigen::Map<const Eigen::VectorXd> b(row.data(), static_cast<Eigen::Index>(row.size()));
    recon += b.dot(z) * b;
  }
  return (z - recon).squaredNorm();
}

double nearest_rank(std::vector<double> values, double percentile) {
  if (!(percentile > 0.0 && percentile <= 1.0)) {
    throw ConfigError("percentile must lie in (0, 1]");
  }
  if (values.empty()) throw DataError("nearest-rank percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // Guard against p*n landing a hair above an integer (0.9 * 100).
  auto rank = static_cast<std::size_t>(std::ceil(percentile * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

DetectorModel calibrate_threshold(DetectorModel model,
                                  std::span<const FeatureVector> validation,
                                  double percentile) {
  if (validation.empty()) throw DataError("validation set is empty");
  if (validation.size() < 10) {
    throw DataError("validation set needs at least 10 flows, got " +
                    std::to_string(validation.size()));
  }
  std::vector<double> scores;
  scores.reserve(validation.size());
  for (const FeatureVector& x : validation) scores.push_back(score(model, x));
  model.threshold = nearest_rank(std::move(scores), percentile);
  model.percentile = percentile;
  return model;
}

std::vector<ScoredFlow> classify(const DetectorModel& model,
                                 std::span<const FeatureVector> features) {
  if (!model.threshold) throw ConfigError("detector threshold not calibrated");
  std::vector<ScoredFlow> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    ScoredFlow s;
    s.flow_id = std::to_string(i);
    s.score = score(model, features[i]);
    s.predicted = decide(s.score, *model.threshold);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredFlow> classify(const DetectorModel& model, std::span<const Flow> flows) {
  std::vector<FeatureVector> feats;
  feats.reserve(flows.size());
  for (const Flow& f : flows) feats.push_back(f.features.empty() ? featurize(f) : f.features);
  auto out = classify(model, std::span<const FeatureVector>(feats));
  for (std::size_t i = 0; i < flows.size(); ++i) {
    out[i].flow_id = flows[i].id;
    out[i].truth = flows[i].truth;
  }
  return out;
}

ScoreImport import_scores(std::istream& in, double threshold,
                          const std::set<std::string>* known_ids) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = csv::split_line(line);
    break;
  }
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto id_col = column("flow_id");
  const auto score_col = column("score");
  const auto truth_col = column("truth");
  if (!id_col || !score_col) {
    throw DataError("scores CSV must have flow_id and score columns");
  }
  ScoreImport result;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = csv::split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("scores CSV line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    ScoredFlow s;
    s.flow_id = cells[*id_col];
    try {
      std::size_t used = 0;
      s.score = std::stod(cells[*score_col], &used);
      if (used != cells[*score_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("scores CSV line " + std::to_string(lineno) + ": bad score '" +
                      cells[*score_col] + "'");
    }
    if (truth_col) s.truth = parse_truth(cells[*truth_col]);
    if (known_ids && !known_ids->contains(s.flow_id)) {
      result.unknown_ids.push_back(s.flow_id);
      continue;
    }
    s.predicted = decide(s.score, threshold);
    result.scored.push_back(std::move(s));
  }
  return result;
}

ScoreImport import_scores(const std::filesystem::path& path, double threshold,
                          const std::set<std::string>* known_ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores file " + path.string());
  return import_scores(in, threshold, known_ids);
}

void export_scores(std::ostream& out, std::span<const ScoredFlow> scored) {
  out << "flow_id,score,predicted,truth\n";
  for (const ScoredFlow& s : scored) {
    out << csv::escape(s.flow_id) << ',' << csv::format_double(s.score) << ','
        << (s.predicted == Prediction::Positive ? "positive" : "negative") << ','
        << to_string(s.truth) << '\n';
  }
}

void save_model(std::ostream& out, const DetectorModel& m) {
  nlohmann::json j;
  j["schema"] = "pmrate-detector";
  j["version"] = 1;
  j["kind"] = m.kind == DetectorKind::ReconstructionBaseline ? "reconstruction-baseline"
                                                             : "external-scores";
  j["dimension"] = m.dimension;
  j["mean"] = m.mean;
  j["stddev"] = m.stddev;
  j["active"] = m.active;
  j["basis"] = m.basis;
  j["threshold"] = m.threshold ? nlohmann::json(*m.threshold) : nlohmann::json(nullptr);
  j["metadata"] = {{"seed", m.seed},
                   {"components", m.requested_components},
                   {"percentile", m.percentile}};
  out << j.dump(1) << '\n';
}

DetectorModel load_model(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("schema", "") != "pmrate-detector" || j.value("version", 0) != 1) {
      throw DataError("not a pmrate-detector v1 model");
    }
    DetectorModel m;
    m.kind = j.at("kind") == "external-scores" ? DetectorKind::ExternalScores
                                               : DetectorKind::ReconstructionBaseline;
    m.dimension = j.at("dimension").get<std::size_t>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stddev = j.at("stddev").get<std::vector<double>>();
    m.active = j.at("active").get<std::vector<bool>>();
    m.basis = j.at("basis").get<std::vector<std::vector<double>>>();
    if (!j.at("threshold").is_null()) m.threshold = j.at("threshold").get<double>();
    const auto& meta = j.at("metadata");
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.requested_components = meta.at("components").get<std::size_t>();
    m.percentile = meta.at("percentile").get<double>();
    if (m.kind == DetectorKind::ReconstructionBaseline &&
        (m.mean.size() != m.dimension || m.stddev.size() != m.dimension ||
         m.active.size() != m.dimension)) {
      throw DataError("detector normalization does not cover every feature");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("detector model: ") + e.what());
  }
}

}  // namespace pmrate
