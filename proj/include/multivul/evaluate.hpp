// Copyright 2026 The MultiVul Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Code-only inference, metrics, cross-dataset evaluation, PCA export,
// latency benchmarking, and false-negative overlap analysis.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "multivul/corpus.hpp"
#include "multivul/diff.hpp"
#include "multivul/model.hpp"

namespace multivul::evaluate {

using corpus::FunctionRecord;
using corpus::Vocabulary;
using model::DualEncoderModel;

inline constexpr double kDefaultThreshold = 0.5;

// y_hat = 1 iff p > delta (strict).
inline int threshold_label(double probability, double delta) {
  return probability > delta ? 1 : 0;
}

struct Prediction {
  std::string id;
  double probability = 0.0;
  int predicted = 0;
  int label = 0;
  std::optional<std::vector<std::string>> cwe;
};

struct PredictionSet {
  std::string method;
  double threshold = kDefaultThreshold;
  std::vector<Prediction> predictions;
};

nlohmann::json predictions_to_json(const PredictionSet& set);
PredictionSet predictions_from_json(const nlohmann::json& j);

// Projected original-view code embeddings (rows unit norm), code only.
diff::Tensor embed_code(const DualEncoderModel& model,
                        std::span<const FunctionRecord> records,
                        const Vocabulary& code_vocab,
                        std::size_t batch_size = 32);

PredictionSet predict(const DualEncoderModel& model,
                      std::span<const FunctionRecord> records,
                      const Vocabulary& code_vocab,
                      double threshold = kDefaultThreshold,
                      std::string method = "multivul",
                      std::size_t batch_size = 32);

// Re-thresholds an existing prediction set.
PredictionSet rethreshold(const PredictionSet& set, double threshold);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn,
                            std::size_t tn);
Metrics compute_metrics(const PredictionSet& predictions);

// Ratios serialized as percentages rounded to two decimals.
nlohmann::json metrics_to_json(const Metrics& m, const std::string& method,
                               const std::string& dataset,
                               const std::string& direction, double threshold);

struct OodReport {
  std::string direction;  // "<source>-><target>"
  Metrics metrics;
  PredictionSet predictions;
};

// The target is tokenized with the source vocabulary.
OodReport cross_dataset_eval(const DualEncoderModel& model,
                             std::span<const FunctionRecord> target,
                             const Vocabulary& source_vocab,
                             const std::string& source_name,
                             const std::string& target_name,
                             double threshold = kDefaultThreshold);

struct PcaProjection {
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> explained_variance_ratio{};
  std::vector<std::array<double, 2>> coordinates;
  std::vector<double> mean;
  std::vector<int> labels;
};

// Top-2 principal components by power iteration with deflation.
PcaProjection pca_project(const diff::Tensor& rows, std::span<const int> labels,
                          std::uint64_t seed = 0);

struct LatencyReport {
  double mean_seconds = 0.0;
  double p50_seconds = 0.0;
  double p95_seconds = 0.0;
  std::size_t samples = 0;
  std::size_t batch_size = 1;
};

LatencyReport latency_bench(const DualEncoderModel& model,
                            std::span<const FunctionRecord> records,
                            const Vocabulary& code_vocab,
                            std::size_t repetitions, std::size_t batch_size);
nlohmann::json latency_to_json(const LatencyReport& r);

struct FnAnalysis {
  std::array<std::string, 3> methods;
  std::array<std::vector<std::string>, 3> false_negatives;  // sorted ids
  // Index by membership mask: bit k set = in method k's FN set. Entry 0
  // is unused.
  std::array<std::vector<std::string>, 8> regions;
  // CWE -> FN count per method; records without a tag land in "Others".
  std::map<std::string, std::array<std::size_t, 3>> per_cwe;

  std::size_t region_count(unsigned mask) const {
    return regions.at(mask).size();
  }
};

std::string region_name(const std::array<std::string, 3>& methods,
                        unsigned mask);

FnAnalysis false_negative_analysis(
    const std::array<PredictionSet, 3>& sets,
    std::span<const FunctionRecord> gold);
nlohmann::json fn_analysis_to_json(const FnAnalysis& a);

}  // namespace multivul::evaluate
