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

#include "multivul/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "multivul/errors.hpp"

namespace multivul::evaluate {

using diff::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Prediction

json predictions_to_json(const PredictionSet& set) {
  json rows = json::array();
  for (const auto& p : set.predictions) {
    json row{{"id", p.id},
             {"probability", p.probability},
             {"predicted", p.predicted},
             {"label", p.label}};
    if (p.cwe) row["cwe"] = *p.cwe;
    rows.push_back(std::move(row));
  }
  return json{{"method", set.method},
              {"threshold", set.threshold},
              {"predictions", std::move(rows)}};
}

PredictionSet predictions_from_json(const json& j) {
  PredictionSet set;
  try {
    set.method = j.at("method").get<std::string>();
    set.threshold = j.at("threshold").get<double>();
    for (const auto& row : j.at("predictions")) {
      Prediction p;
      p.id = row.at("id").get<std::string>();
      p.probability = row.at("probability").get<double>();
      p.predicted = row.at("predicted").get<int>();
      p.label = row.at("label").get<int>();
      if (auto c = row.find("cwe"); c != row.end() && !c->is_null()) {
        p.cwe = c->get<std::vector<std::string>>();
      }
      set.predictions.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed prediction set: ") + e.what());
  }
  return set;
}

Tensor embed_code(const DualEncoderModel& model,
                  std::span<const FunctionRecord> records,
                  const Vocabulary& code_vocab, std::size_t batch_size) {
  if (records.empty()) throw ContractError("predict: no records");
  if (batch_size == 0) throw ContractError("predict: batch size must be >= 1");
  const std::size_t max_len = model.config().max_input_length;
  const std::size_t p = model.config().projection_dim;
  std::vector<double> values;
  values.reserve(records.size() * p);
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + batch_size);
    std::vector<corpus::TokenSequence> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(corpus::encode(
          corpus::tokenize(records[i].code, corpus::Modality::kCode),
          code_vocab, max_len));
    }
    const Tensor hidden =
        model::encode_batch(model, batch, corpus::Modality::kCode);
    const Tensor z = model::project(model, hidden, corpus::Modality::kCode);
    values.insert(values.end(), z.values().begin(), z.values().end());
  }
  return Tensor::matrix(records.size(), p, std::move(values));
}

PredictionSet predict(const DualEncoderModel& model,
                      std::span<const FunctionRecord> records,
                      const Vocabulary& code_vocab, double threshold,
                      std::string method, std::size_t batch_size) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("predict: threshold must lie in (0, 1)");
  }
  const Tensor z = embed_code(model, records, code_vocab, batch_size);
  const auto cls = model::classify(model, z);
  PredictionSet set;
  set.method = std::move(method);
  set.threshold = threshold;
  set.predictions.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Prediction p;
    p.id = records[i].id;
    p.probability = cls.probabilities[i];
    p.predicted = threshold_label(p.probability, threshold);
    p.label = records[i].label;
    p.cwe = records[i].cwe;
    set.predictions.push_back(std::move(p));
  }
  return set;
}

PredictionSet rethreshold(const PredictionSet& set, double threshold) {
  PredictionSet out = set;
  out.threshold = threshold;
  for (auto& p : out.predictions) {
    p.predicted = threshold_label(p.probability, threshold);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn,
                            std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  const auto total = static_cast<double>(tp + fp + fn + tn);
  m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

Metrics compute_metrics(const PredictionSet& set) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& p : set.predictions) {
    if (p.label == 1) {
      (p.predicted == 1 ? tp : fn) += 1;
    } else {
      (p.predicted == 1 ? fp : tn) += 1;
    }
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

namespace {

double percent(double ratio) { return std::round(ratio * 10000.0) / 100.0; }

}  // namespace

json metrics_to_json(const Metrics& m, const std::string& method,
                     const std::string& dataset, const std::string& direction,
                     double threshold) {
  return json{{"method", method},
              {"dataset", dataset},
              {"direction", direction},
              {"accuracy", percent(m.accuracy)},
              {"precision", percent(m.precision)},
              {"recall", percent(m.recall)},
              {"f1", percent(m.f1)},
              {"tp", m.tp},
              {"fp", m.fp},
              {"fn", m.fn},
              {"tn", m.tn},
              {"threshold", threshold}};
}

OodReport cross_dataset_eval(const DualEncoderModel& model,
                             std::span<const FunctionRecord> target,
                             const Vocabulary& source_vocab,
                             const std::string& source_name,
                             const std::string& target_name,
                             double threshold) {
  OodReport report;
  report.direction = source_name + "->" + target_name;
  report.predictions = predict(model, target, source_vocab, threshold);
  report.metrics = compute_metrics(report.predictions);
  return report;
}

// ---------------------------------------------------------------------------
// PCA

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> mat_vec(const Matrix& c, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += c[i][j] * v[j];
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 1e-300)) return false;
  for (double& x : v) x /= n;
  return true;
}

void orthogonalize(std::vector<double>& v,
                   const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double d = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
  }
}

void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

PcaProjection pca_project(const Tensor& rows, std::span<const int> labels,
                          std::uint64_t seed) {
  if (rows.rank() != 2 || rows.rows() < 3 || rows.cols() < 2) {
    throw ContractError("pca: need at least 3 rows of dimension >= 2, got " +
                        rows.shape_string());
  }
  if (!labels.empty() && labels.size() != rows.rows()) {
    throw ContractError("pca: label count does not match row count");
  }
  const std::size_t n = rows.rows(), d = rows.cols();

  PcaProjection out;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += rows(i, j);
  for (double& m : out.mean) m /= static_cast<double>(n);

  Matrix cov(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = rows(i, a) - out.mean[a];
      for (std::size_t b = 0; b < d; ++b) {
        cov[a][b] += xa * (rows(i, b) - out.mean[b]);
      }
    }
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) cov[a][b] /= static_cast<double>(n - 1);
    trace += cov[a][a];
  }
  if (!(trace > 0.0)) throw ContractError("pca: rank-0 data (all rows equal)");

  constexpr double kTolerance = 1e-9;
  constexpr int kMaxIterations = 1000;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> found;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> v(d);
    for (double& x : v) x = normal(rng);
    orthogonalize(v, found);
    normalize(v);
    for (int it = 0; it < kMaxIterations; ++it) {
      std::vector<double> w = mat_vec(cov, v);
      orthogonalize(w, found);
      if (!normalize(w)) break;  // deflated matrix is zero on this subspace
      double diff = 0.0;
      for (std::size_t i = 0; i < d; ++i) diff += (w[i] - v[i]) * (w[i] - v[i]);
      v = std::move(w);
      if (std::sqrt(diff) < kTolerance) break;
    }
    fix_sign(v);
    const double lambda = std::max(0.0, dot(v, mat_vec(cov, v)));
    out.explained_variance_ratio[static_cast<std::size_t>(k)] = lambda / trace;
    // Deflate.
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a][b] -= lambda * v[a] * v[b];
    found.push_back(v);
    out.components[static_cast<std::size_t>(k)] = std::move(v);
  }

  out.coordinates.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        s += (rows(i, j) - out.mean[j]) * out.components[k][j];
      }
      out.coordinates[i][k] = s;
    }
  }
  out.labels.assign(labels.begin(), labels.end());
  return out;
}

// ---------------------------------------------------------------------------
// Latency

LatencyReport latency_bench(const DualEncoderModel& model,
                            std::span<const FunctionRecord> records,
                            const Vocabulary& code_vocab,
                            std::size_t repetitions, std::size_t batch_size) {
  if (repetitions < 3) throw ContractError("latency: repetitions must be >= 3");
  if (records.empty()) throw ContractError("latency: no records");
  if (batch_size == 0) throw ContractError("latency: batch size must be >= 1");
  const std::uint64_t text_before = model.text_invocations();

  auto score = [&](std::span<const FunctionRecord> chunk) {
    const Tensor z = embed_code(model, chunk, code_vocab, chunk.size());
    return model::classify(model, z).probabilities.size();
  };
  score(records.subspan(0, std::min(batch_size, records.size())));  // warm-up

  std::vector<double> per_sample;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    for (std::size_t start = 0; start < records.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, records.size() - start);
      const auto t0 = std::chrono::steady_clock::now();
      score(records.subspan(start, len));
      const auto t1 = std::chrono::steady_clock::now();
      double secs = std::chrono::duration<double>(t1 - t0).count();
      secs = std::max(secs, 1e-9);
      for (std::size_t i = 0; i < len; ++i) {
        per_sample.push_back(secs / static_cast<double>(len));
      }
    }
  }
  if (model.text_invocations() != text_before) {
    throw ContractError("latency: text encoder invoked during inference");
  }

  LatencyReport report;
  report.samples = per_sample.size();
  report.batch_size = batch_size;
  double sum = 0.0;
  for (double s : per_sample) sum += s;
  report.mean_seconds = sum / static_cast<double>(per_sample.size());
  std::sort(per_sample.begin(), per_sample.end());
  auto quantile = [&](double q) {
    const auto idx = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(per_sample.size())));
    return per_sample[std::clamp<std::size_t>(idx, 1, per_sample.size()) - 1];
  };
  report.p50_seconds = quantile(0.50);
  report.p95_seconds = quantile(0.95);
  return report;
}

json latency_to_json(const LatencyReport& r) {
  return json{{"mean_seconds", r.mean_seconds},
              {"p50_seconds", r.p50_seconds},
              {"p95_seconds", r.p95_seconds},
              {"samples", r.samples},
              {"batch_size", r.batch_size}};
}

// ---------------------------------------------------------------------------
// False-negative analysis

std::string region_name(const std::array<std::string, 3>& methods,
                        unsigned mask) {
  if (mask == 0 || mask > 7) throw ContractError("region mask out of range");
  std::string inside, outside;
  for (unsigned k = 0; k < 3; ++k) {
    std::string& dst = (mask >> k) & 1U ? inside : outside;
    if (!dst.empty()) dst += "&";
    dst += methods[k];
  }
  if (outside.empty()) return inside;
  return inside + " not " + outside;
}

FnAnalysis false_negative_analysis(const std::array<PredictionSet, 3>& sets,
                                   std::span<const FunctionRecord> gold) {
  std::unordered_map<std::string, const FunctionRecord*> by_id;
  for (const auto& r : gold) by_id.emplace(r.id, &r);

  std::set<std::string> reference;
  for (const auto& p : sets[0].predictions) reference.insert(p.id);
  FnAnalysis out;
  std::array<std::unordered_set<std::string>, 3> fn_sets;
  for (std::size_t k = 0; k < 3; ++k) {
    out.methods[k] = sets[k].method;
    std::set<std::string> ids;
    for (const auto& p : sets[k].predictions) {
      ids.insert(p.id);
      auto it = by_id.find(p.id);
      if (it == by_id.end()) {
        throw ContractError("fn-analysis: id '" + p.id +
                            "' not present in gold records");
      }
      if (it->second->label == 1 && p.predicted == 0) {
        fn_sets[k].insert(p.id);
        out.false_negatives[k].push_back(p.id);
      }
    }
    if (ids != reference || ids.size() != sets[k].predictions.size()) {
      throw ContractError("fn-analysis: prediction sets cover different ids");
    }
    std::sort(out.false_negatives[k].begin(), out.false_negatives[k].end());
  }

  std::set<std::string> all;
  for (const auto& s : fn_sets) all.insert(s.begin(), s.end());
  for (const auto& id : all) {
    unsigned mask = 0;
    for (unsigned k = 0; k < 3; ++k) {
      if (fn_sets[k].count(id)) mask |= 1U << k;
    }
    out.regions[mask].push_back(id);

    const FunctionRecord& rec = *by_id.at(id);
    std::vector<std::string> tags;
    if (rec.cwe && !rec.cwe->empty()) {
      tags = *rec.cwe;
      std::sort(tags.begin(), tags.end());
      tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    } else {
      tags = {"Others"};
    }
    for (const auto& tag : tags) {
      auto& row = out.per_cwe[tag];
      for (unsigned k = 0; k < 3; ++k) row[k] += (mask >> k) & 1U;
    }
  }
  return out;
}

json fn_analysis_to_json(const FnAnalysis& a) {
  json totals = json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    totals[a.methods[k]] = a.false_negatives[k].size();
  }
  json regions = json::array();
  for (unsigned mask = 1; mask < 8; ++mask) {
    json members = json::array();
    for (unsigned k = 0; k < 3; ++k) {
      if ((mask >> k) & 1U) members.push_back(a.methods[k]);
    }
    regions.push_back({{"name", region_name(a.methods, mask)},
                       {"members", members},
                       {"count", a.regions[mask].size()},
                       {"ids", a.regions[mask]}});
  }
  json cwe = json::array();
  for (const auto& [tag, counts] : a.per_cwe) {
    json row{{"cwe", tag}};
    for (std::size_t k = 0; k < 3; ++k) row[a.methods[k]] = counts[k];
    cwe.push_back(std::move(row));
  }
  return json{{"methods", a.methods},
              {"false_negatives", totals},
              {"regions", regions},
              {"per_cwe", cwe}};
}

}  // namespace multivul::evaluate
