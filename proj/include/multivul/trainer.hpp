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

// Mini-batch training loop, Adam with decoupled weight decay, gradient-norm
// clipping, and checkpoint persistence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "multivul/corpus.hpp"
#include "multivul/diff.hpp"
#include "multivul/evaluate.hpp"
#include "multivul/model.hpp"
#include "multivul/objective.hpp"

namespace multivul::trainer {

using corpus::FunctionRecord;
using corpus::Vocabulary;
using model::DualEncoderModel;
using objective::LossBreakdown;
using objective::LossWeights;

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double learning_rate = 3e-5;
  double weight_decay = 1e-4;
  LossWeights weights;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  // Vocabulary sizes are filled in from the training split.
  model::EncoderConfig encoder;
  std::size_t code_vocab_max = 5000;
  std::size_t text_vocab_max = 5000;
  bool resample_augmentation = true;
  bool disable_aug_alignment = false;
  bool disable_consistency = false;
  bool fine_tuning_only = false;
  bool select_best = true;  // false: keep the final-epoch model
  double max_grad_norm = 1.0;
  double threshold = evaluate::kDefaultThreshold;
};

void validate(const TrainConfig& config);
// Applies the ablation switches to the configured loss weights.
LossWeights effective_weights(const TrainConfig& config);
nlohmann::json config_to_json(const TrainConfig& config);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// theta <- theta - lr*wd*theta, then the bias-corrected Adam delta.
// Gradients are zeroed afterward. Throws on a non-finite gradient.
void optimizer_step(std::span<diff::Parameter> params, OptimizerState& state,
                    double learning_rate, double weight_decay);

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<diff::Parameter> params, double max_norm);

struct StepLog {
  std::size_t step = 0;
  LossBreakdown loss;
  double gamma = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean_loss;
  evaluate::Metrics validation;
};

struct TrainResult {
  DualEncoderModel final_model;
  DualEncoderModel best_model;
  std::size_t best_epoch = 0;
  Vocabulary code_vocab{corpus::Modality::kCode};
  Vocabulary text_vocab{corpus::Modality::kText};
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;

  // best_model when select_best, else final_model.
  const DualEncoderModel& selected(const TrainConfig& config) const {
    return config.select_best ? best_model : final_model;
  }
};

// Epoch permutation of [0, n), determined by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::size_t epoch);

using StepCallback = std::function<void(const StepLog&)>;

TrainResult train(std::span<const FunctionRecord> train_records,
                  std::span<const FunctionRecord> validation_records,
                  const TrainConfig& config, const StepCallback& on_step = {});

// Loss log CSV: step,clip_orig,clip_aug,consistency,classification,total,gamma
void write_loss_csv(std::ostream& out, std::span<const StepLog> steps);

// ---------------------------------------------------------------------------
// Checkpoints: <prefix>.manifest.json + <prefix>.params.bin

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointVersion;
  DualEncoderModel model;
  Vocabulary code_vocab{corpus::Modality::kCode};
  Vocabulary text_vocab{corpus::Modality::kText};
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  // Free-form settings recorded as "run_config" in the manifest when set.
  nlohmann::json provenance;
};

std::filesystem::path manifest_path(const std::filesystem::path& prefix);
std::filesystem::path payload_path(const std::filesystem::path& prefix);

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& prefix);
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

}  // namespace multivul::trainer
