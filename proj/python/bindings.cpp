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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "multivul/augment.hpp"
#include "multivul/commenter.hpp"
#include "multivul/corpus.hpp"
#include "multivul/errors.hpp"
#include "multivul/evaluate.hpp"
#include "multivul/objective.hpp"
#include "multivul/synth.hpp"
#include "multivul/trainer.hpp"

namespace py = pybind11;
using namespace multivul;

namespace {

// Records cross the boundary as JSONL text; the Python wrapper converts.
std::vector<corpus::FunctionRecord> parse_records(const std::string& jsonl) {
  std::istringstream in(jsonl);
  return corpus::read_jsonl(in);
}

std::string dump_records(std::span<const corpus::FunctionRecord> records) {
  std::ostringstream out;
  corpus::write_jsonl(out, records);
  return out.str();
}

diff::Tensor to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw ContractError("expected a non-empty matrix");
  }
  const std::size_t cols = rows.front().size();
  std::vector<double> values;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ContractError("ragged matrix");
    values.insert(values.end(), r.begin(), r.end());
  }
  return diff::Tensor::matrix(rows.size(), cols, std::move(values));
}

corpus::Modality modality_from(const std::string& name) {
  if (name == "code") return corpus::Modality::kCode;
  if (name == "text") return corpus::Modality::kText;
  throw ContractError("modality must be 'code' or 'text'");
}

py::dict metrics_dict(const evaluate::Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["fn"] = m.fn;
  d["tn"] = m.tn;
  return d;
}

struct TrainedModel {
  model::DualEncoderModel model;
  corpus::Vocabulary code_vocab;
  corpus::Vocabulary text_vocab;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the multivul toolkit";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<RemoteError>(m, "RemoteError", PyExc_RuntimeError);

  m.def("tokenize", [](const std::string& text, const std::string& modality) {
    return corpus::tokenize(text, modality_from(modality));
  }, py::arg("text"), py::arg("modality") = "code");

  m.def("dataset_stats", [](const std::string& jsonl) {
    const auto s = corpus::dataset_stats(parse_records(jsonl));
    return corpus::stats_to_json(s).dump();
  }, py::arg("jsonl"));

  m.def("stratified_split", [](const std::string& jsonl,
                               std::array<double, 3> fractions,
                               std::uint64_t seed) {
    const auto split =
        corpus::stratified_split(parse_records(jsonl), fractions, seed);
    return py::make_tuple(dump_records(split.train),
                          dump_records(split.validation),
                          dump_records(split.test));
  }, py::arg("jsonl"), py::arg("fractions"), py::arg("seed") = 0);

  m.def("stub_comment", [](const std::string& code) {
    corpus::FunctionRecord r;
    r.code = code;
    return commenter::generate_comment_stub(r);
  }, py::arg("code"));

  m.def("first_sentence", &commenter::first_sentence, py::arg("reply"));

  m.def("augment_tokens", [](const std::vector<std::string>& tokens,
                             double alpha, std::uint64_t seed) {
    augment::Rng rng(seed);
    return augment::augment_tokens(tokens, alpha, rng);
  }, py::arg("tokens"), py::arg("alpha"), py::arg("seed") = 0);

  m.def("augmented_views", [](const std::string& example_id,
                              const std::vector<std::string>& code,
                              const std::vector<std::string>& text,
                              double alpha, std::uint64_t seed) {
    auto [c, t] = augment::make_augmented_views(example_id, code, text,
                                                augment::AugConfig{alpha, seed});
    return py::make_tuple(c.augmented, t.augmented);
  }, py::arg("example_id"), py::arg("code"), py::arg("text"),
     py::arg("alpha") = 0.05, py::arg("seed") = 0);

  m.def("clip_loss", [](const std::vector<std::vector<double>>& s) {
    return objective::clip_loss(to_matrix(s));
  }, py::arg("similarity"));

  m.def("consistency_loss", [](const std::vector<std::vector<double>>& code,
                               const std::vector<std::vector<double>>& code_aug,
                               const std::vector<std::vector<double>>& text,
                               const std::vector<std::vector<double>>& text_aug) {
    return objective::consistency_loss(to_matrix(code), to_matrix(code_aug),
                                       to_matrix(text), to_matrix(text_aug));
  });

  m.def("bce_loss", [](const std::vector<double>& p, const std::vector<int>& y) {
    return objective::bce_loss(p, y);
  }, py::arg("probabilities"), py::arg("labels"));

  m.def("metrics_from_counts", [](std::size_t tp, std::size_t fp,
                                  std::size_t fn, std::size_t tn) {
    return metrics_dict(evaluate::metrics_from_counts(tp, fp, fn, tn));
  });

  m.def("compute_metrics", [](const std::vector<int>& labels,
                              const std::vector<int>& predicted) {
    if (labels.size() != predicted.size()) {
      throw ContractError("labels and predictions differ in length");
    }
    evaluate::PredictionSet set;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      evaluate::Prediction p;
      p.id = std::to_string(i);
      p.label = labels[i];
      p.predicted = predicted[i];
      p.probability = predicted[i] ? 1.0 : 0.0;
      set.predictions.push_back(p);
    }
    return metrics_dict(evaluate::compute_metrics(set));
  }, py::arg("labels"), py::arg("predicted"));

  m.def("pca_project", [](const std::vector<std::vector<double>>& rows,
                          std::vector<int> labels, std::uint64_t seed) {
    if (labels.empty()) labels.assign(rows.size(), 0);
    const auto p = evaluate::pca_project(to_matrix(rows), labels, seed);
    py::dict d;
    d["components"] = p.components;
    d["explained_variance_ratio"] = p.explained_variance_ratio;
    d["coordinates"] = p.coordinates;
    d["mean"] = p.mean;
    return d;
  }, py::arg("rows"), py::arg("labels") = std::vector<int>{},
     py::arg("seed") = 0);

  m.def("synth_corpus", [](std::size_t functions, std::uint64_t seed) {
    synth::SynthConfig c;
    c.functions = functions;
    c.seed = seed;
    return dump_records(synth::generate(c));
  }, py::arg("functions") = 400, py::arg("seed") = 0);

  py::class_<TrainedModel>(m, "Model")
      .def("predict", [](const TrainedModel& t, const std::string& jsonl,
                         double threshold) {
        const auto set = evaluate::predict(t.model, parse_records(jsonl),
                                           t.code_vocab, threshold);
        std::vector<double> probs;
        std::vector<int> labels;
        for (const auto& p : set.predictions) {
          probs.push_back(p.probability);
          labels.push_back(p.predicted);
        }
        return py::make_tuple(probs, labels);
      }, py::arg("jsonl"), py::arg("threshold") = 0.5)
      .def("evaluate", [](const TrainedModel& t, const std::string& jsonl,
                          double threshold) {
        return metrics_dict(evaluate::compute_metrics(evaluate::predict(
            t.model, parse_records(jsonl), t.code_vocab, threshold)));
      }, py::arg("jsonl"), py::arg("threshold") = 0.5)
      .def_property_readonly("text_invocations", [](const TrainedModel& t) {
        return t.model.text_invocations();
      })
      .def("save", [](const TrainedModel& t, const std::string& prefix) {
        trainer::save_checkpoint({trainer::kCheckpointVersion, t.model,
                                  t.code_vocab, t.text_vocab, 0, 0, {}},
                                 prefix);
      }, py::arg("prefix"));

  m.def("load_model", [](const std::string& prefix) {
    auto c = trainer::load_checkpoint(prefix);
    return TrainedModel{std::move(c.model), std::move(c.code_vocab),
                        std::move(c.text_vocab)};
  }, py::arg("prefix"));

  m.def("train", [](const std::string& train_jsonl,
                    const std::string& valid_jsonl, std::size_t epochs,
                    std::uint64_t seed, bool fine_tuning_only,
                    double learning_rate) {
    trainer::TrainConfig c;
    c.epochs = epochs;
    c.seed = seed;
    c.fine_tuning_only = fine_tuning_only;
    c.learning_rate = learning_rate;
    const auto train = parse_records(train_jsonl);
    const auto valid = parse_records(valid_jsonl);
    std::vector<double> losses;
    auto result = [&] {
      py::gil_scoped_release release;
      return trainer::train(train, valid, c, [&](const trainer::StepLog& s) {
        losses.push_back(s.loss.total);
      });
    }();
    return py::make_tuple(
        TrainedModel{result.selected(c), result.code_vocab, result.text_vocab},
        losses);
  }, py::arg("train_jsonl"), py::arg("valid_jsonl"), py::arg("epochs") = 10,
     py::arg("seed") = 0, py::arg("fine_tuning_only") = false,
     py::arg("learning_rate") = 3e-5);
}
