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

// Training objectives: code-text similarity, symmetric InfoNCE, dual-CLIP,
// cross-view consistency, binary cross-entropy, and their weighted total.

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "multivul/diff.hpp"

namespace multivul::objective {

using diff::Tensor;
using diff::Var;

enum class View { kOriginal, kAugmented };

struct SimilarityMatrix {
  Tensor entries;
  View view = View::kOriginal;
  double gamma = 1.0;
};

struct LossWeights {
  double clip_orig = 0.5;
  double clip_aug = 0.5;
  double consistency = 0.1;
  double classification = 1.0;
};

void validate(const LossWeights& weights);
nlohmann::json weights_to_json(const LossWeights& weights);

struct LossBreakdown {
  double clip_orig = 0.0;
  double clip_aug = 0.0;
  double consistency = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

inline constexpr double kProbabilityClamp = 1e-7;

// gamma * code_rows * text_rows^T. `gamma` is a 1x1 node.
Var similarity(Var code_rows, Var text_rows, Var gamma);
// (1/2B) sum_i [ lse(row i) - S_ii + lse(col i) - S_ii ].
Var clip_loss(Var similarity);
Var dual_clip_loss(Var s_orig, Var s_aug, const LossWeights& weights);
Var consistency_loss(Var code, Var code_aug, Var text, Var text_aug);
// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logarithms.
Var bce_loss(Var probabilities, std::span<const int> labels);

// The four projected streams of one mini-batch. Only the original code
// stream is mandatory; the others may be absent when every term that reads
// them has zero weight.
struct BatchEmbeddings {
  Var code;
  std::optional<Var> text;
  std::optional<Var> code_aug;
  std::optional<Var> text_aug;
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

// Terms with zero weight are not evaluated and are reported as 0.
TotalLoss total_loss(const BatchEmbeddings& batch, Var gamma,
                     Var probabilities, std::span<const int> labels,
                     const LossWeights& weights);

// Tensor-level helpers.
SimilarityMatrix similarity_matrix(const Tensor& code_rows,
                                   const Tensor& text_rows, double gamma,
                                   View view = View::kOriginal);
double clip_loss(const SimilarityMatrix& s);
double clip_loss(const Tensor& s);
double consistency_loss(const Tensor& code, const Tensor& code_aug,
                        const Tensor& text, const Tensor& text_aug);
double bce_loss(std::span<const double> probabilities,
                std::span<const int> labels);

}  // namespace multivul::objective
