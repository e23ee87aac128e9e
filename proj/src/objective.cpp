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

#include "multivul/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "multivul/errors.hpp"

namespace multivul::objective {

using diff::Tape;
using nlohmann::json;

void validate(const LossWeights& w) {
  if (w.clip_orig < 0 || w.clip_aug < 0 || w.consistency < 0 ||
      w.classification < 0) {
    throw ContractError("loss weights must be non-negative");
  }
}

json weights_to_json(const LossWeights& w) {
  return json{{"clip_orig", w.clip_orig},
              {"clip_aug", w.clip_aug},
              {"consistency", w.consistency},
              {"classification", w.classification}};
}

namespace {

void require_same_rows(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw ContractError(std::string(op) + ": batch mismatch " +
                        a.shape_string() + " vs " + b.shape_string());
  }
}

Tensor identity(std::size_t n) {
  Tensor eye = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
  return eye;
}

}  // namespace

Var similarity(Var code_rows, Var text_rows, Var gamma) {
  require_same_rows("similarity", code_rows.value(), text_rows.value());
  if (gamma.value().size() != 1) {
    throw ContractError("similarity: gamma must be 1x1");
  }
  Tape& tape = code_rows.tape();
  const std::size_t b = code_rows.value().rows();
  Var dots = diff::matmul(code_rows, diff::transpose(text_rows));
  // Fill a B x B matrix with gamma via outer products with ones.
  Var col = diff::matmul(diff::constant(tape, Tensor::filled({b, 1}, 1.0)),
                         gamma);
  Var fill = diff::matmul(col, diff::constant(tape, Tensor::filled({1, b}, 1.0)));
  return diff::hadamard(dots, fill);
}

Var clip_loss(Var s) {
  const Tensor& v = s.value();
  if (v.rank() != 2 || v.rows() != v.cols()) {
    throw ContractError("clip_loss: similarity matrix must be square, got " +
                        v.shape_string());
  }
  Tape& tape = s.tape();
  const std::size_t b = v.rows();
  Var rows = diff::sum_all(diff::row_log_sum_exp(s));
  Var cols = diff::sum_all(diff::row_log_sum_exp(diff::transpose(s)));
  Var diag = diff::sum_all(diff::hadamard(s, diff::constant(tape, identity(b))));
  Var total = (rows + cols) - diff::scale(diag, 2.0);
  return diff::scale(total, 1.0 / (2.0 * static_cast<double>(b)));
}

Var dual_clip_loss(Var s_orig, Var s_aug, const LossWeights& weights) {
  if (s_orig.value().shape() != s_aug.value().shape()) {
    throw ContractError("dual_clip_loss: batch mismatch " +
                        s_orig.value().shape_string() + " vs " +
                        s_aug.value().shape_string());
  }
  return diff::scale(clip_loss(s_orig), weights.clip_orig) +
         diff::scale(clip_loss(s_aug), weights.clip_aug);
}

Var consistency_loss(Var code, Var code_aug, Var text, Var text_aug) {
  if (code.value().shape() != code_aug.value().shape() ||
      text.value().shape() != text_aug.value().shape()) {
    throw ContractError("consistency_loss: shape mismatch between views");
  }
  require_same_rows("consistency_loss", code.value(), text.value());
  Var c = diff::mean_all(diff::row_squared_distance(code, code_aug));
  Var t = diff::mean_all(diff::row_squared_distance(text, text_aug));
  return diff::scale(c + t, 0.5);
}

Var bce_loss(Var probabilities, std::span<const int> labels) {
  const Tensor& p = probabilities.value();
  if (p.size() != labels.size()) {
    throw ContractError("bce_loss: " + std::to_string(p.size()) +
                        " probabilities vs " + std::to_string(labels.size()) +
                        " labels");
  }
  Tape& tape = probabilities.tape();
  const std::vector<std::size_t>& shape = p.shape();
  // clamp(p) = p * mask + offset, with mask 0 where p is out of band.
  std::vector<double> mask(p.size()), offset(p.size()), y(p.size()),
      not_y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.values()[i];
    const double c = std::clamp(v, kProbabilityClamp, 1.0 - kProbabilityClamp);
    mask[i] = c == v ? 1.0 : 0.0;
    offset[i] = c == v ? 0.0 : c;
    if (labels[i] != 0 && labels[i] != 1) {
      throw ContractError("bce_loss: labels must be 0 or 1");
    }
    y[i] = labels[i];
    not_y[i] = 1.0 - labels[i];
  }
  Var clamped = diff::hadamard(probabilities, diff::constant(tape, Tensor(shape, mask))) +
                diff::constant(tape, Tensor(shape, offset));
  Var ones = diff::constant(tape, Tensor::filled(shape, 1.0));
  Var pos = diff::hadamard(diff::constant(tape, Tensor(shape, y)),
                           diff::log(clamped));
  Var neg = diff::hadamard(diff::constant(tape, Tensor(shape, not_y)),
                           diff::log(ones - clamped));
  return diff::scale(diff::mean_all(pos + neg), -1.0);
}

TotalLoss total_loss(const BatchEmbeddings& batch, Var gamma,
                     Var probabilities, std::span<const int> labels,
                     const LossWeights& weights) {
  validate(weights);
  const std::size_t b = batch.code.value().rows();
  if ((batch.text && batch.text->value().rows() != b) ||
      probabilities.value().size() != b || labels.size() != b) {
    throw ContractError("total_loss: inconsistent batch size");
  }
  Tape& tape = batch.code.tape();
  LossBreakdown parts;
  std::optional<Var> total;
  auto accumulate = [&](Var term, double weight, double& slot) {
    slot = term.value().item();
    Var weighted = diff::scale(term, weight);
    total = total ? *total + weighted : weighted;
  };

  auto require = [](const std::optional<Var>& v) -> Var {
    if (!v) throw ContractError("total_loss: a weighted term needs a missing view");
    return *v;
  };
  if (weights.clip_orig > 0) {
    accumulate(clip_loss(similarity(batch.code, require(batch.text), gamma)),
               weights.clip_orig, parts.clip_orig);
  }
  if (weights.clip_aug > 0) {
    accumulate(clip_loss(similarity(require(batch.code_aug),
                                    require(batch.text_aug), gamma)),
               weights.clip_aug, parts.clip_aug);
  }
  if (weights.consistency > 0) {
    accumulate(consistency_loss(batch.code, require(batch.code_aug),
                                require(batch.text), require(batch.text_aug)),
               weights.consistency, parts.consistency);
  }
  if (weights.classification > 0) {
    accumulate(bce_loss(probabilities, labels), weights.classification,
               parts.classification);
  }
  if (!total) total = diff::constant(tape, Tensor::scalar(0.0));
  parts.total = total->value().item();
  return {*total, parts};
}

// ---------------------------------------------------------------------------

SimilarityMatrix similarity_matrix(const Tensor& code_rows,
                                   const Tensor& text_rows, double gamma,
                                   View view) {
  if (!(gamma >= 1.0 && gamma <= 100.0)) {
    throw ContractError("similarity_matrix: gamma outside [1, 100]");
  }
  Tape tape;
  Var s = similarity(diff::constant(tape, code_rows),
                     diff::constant(tape, text_rows),
                     diff::constant(tape, Tensor::scalar(gamma)));
  return {s.value(), view, gamma};
}

double clip_loss(const SimilarityMatrix& s) { return clip_loss(s.entries); }

double clip_loss(const Tensor& s) {
  Tape tape;
  return clip_loss(diff::constant(tape, s)).value().item();
}

double consistency_loss(const Tensor& code, const Tensor& code_aug,
                        const Tensor& text, const Tensor& text_aug) {
  Tape tape;
  return consistency_loss(diff::constant(tape, code),
                          diff::constant(tape, code_aug),
                          diff::constant(tape, text),
                          diff::constant(tape, text_aug))
      .value()
      .item();
}

double bce_loss(std::span<const double> probabilities,
                std::span<const int> labels) {
  Tape tape;
  Tensor p({probabilities.size()},
           std::vector<double>(probabilities.begin(), probabilities.end()));
  return bce_loss(diff::constant(tape, p), labels).value().item();
}

}  // namespace multivul::objective
