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

// Dual encoders f (code) and g (text), projection heads into the shared
// space, the learnable logit scale, and the vulnerability classifier head.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "multivul/corpus.hpp"
#include "multivul/diff.hpp"

namespace multivul::model {

using corpus::Modality;
using corpus::TokenSequence;

struct EncoderConfig {
  std::size_t code_vocab_size = 0;
  std::size_t text_vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  std::size_t max_input_length = 256;
  std::size_t projection_dim = 32;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void validate(const EncoderConfig& config);
nlohmann::json config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::json& j);

inline constexpr double kInitialGamma = 14.0;
inline constexpr double kMinGamma = 1.0;
inline constexpr double kMaxGamma = 100.0;

class DualEncoderModel {
 public:
  // Parameters start at zero (logit scale at log 14); see init_model.
  explicit DualEncoderModel(const EncoderConfig& config);

  DualEncoderModel(const DualEncoderModel& other);
  DualEncoderModel& operator=(const DualEncoderModel& other);
  DualEncoderModel(DualEncoderModel&& other) noexcept;
  DualEncoderModel& operator=(DualEncoderModel&& other) noexcept;

  const EncoderConfig& config() const noexcept { return config_; }

  // Stable order; names are unique.
  std::vector<diff::Parameter>& parameters() noexcept { return params_; }
  const std::vector<diff::Parameter>& parameters() const noexcept {
    return params_;
  }
  diff::Parameter& parameter(std::string_view name);
  const diff::Parameter& parameter(std::string_view name) const;

  struct Head {
    std::size_t query, key, value, output;
  };
  struct Block {
    std::vector<Head> heads;
    std::size_t attn_bias, ff_in, ff_in_bias, ff_out, ff_out_bias;
  };
  struct EncoderLayout {
    std::size_t embedding;
    std::vector<Block> blocks;
  };
  struct ClassifierLayout {
    std::size_t hidden, hidden_bias, out, out_bias;
  };

  const EncoderLayout& encoder(Modality m) const {
    return m == Modality::kCode ? code_ : text_;
  }
  std::size_t projection(Modality m) const {
    return m == Modality::kCode ? code_projection_ : text_projection_;
  }
  std::size_t log_scale() const noexcept { return log_scale_; }
  const ClassifierLayout& classifier() const noexcept { return classifier_; }

  // Number of text-encoder forward calls so far.
  std::uint64_t text_invocations() const noexcept {
    return text_calls_.load(std::memory_order_relaxed);
  }
  void note_text_invocation() const noexcept {
    text_calls_.fetch_add(1, std::memory_order_relaxed);
  }
  void reset_text_invocations() noexcept {
    text_calls_.store(0, std::memory_order_relaxed);
  }

 private:
  std::size_t add(std::string name, std::vector<std::size_t> shape);
  EncoderLayout add_encoder(const std::string& prefix, std::size_t vocab);

  EncoderConfig config_;
  std::vector<diff::Parameter> params_;
  EncoderLayout code_;
  EncoderLayout text_;
  std::size_t code_projection_ = 0;
  std::size_t text_projection_ = 0;
  std::size_t log_scale_ = 0;
  ClassifierLayout classifier_{};
  mutable std::atomic<std::uint64_t> text_calls_{0};
};

// Weights ~ N(0, 0.02^2), biases zero, exp(s) = 14. Deterministic per seed.
DualEncoderModel init_model(const EncoderConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tape-level forward passes. A mutable model binds its parameters (so
// backward reaches them); a const model records them as constants.

diff::Var encode(diff::Tape& tape, DualEncoderModel& model,
                 std::span<const TokenSequence> sequences, Modality modality);
diff::Var encode(diff::Tape& tape, const DualEncoderModel& model,
                 std::span<const TokenSequence> sequences, Modality modality);

diff::Var project(DualEncoderModel& model, diff::Var hidden,
                  Modality modality);
diff::Var project(const DualEncoderModel& model, diff::Var hidden,
                  Modality modality);

// B x 1 logits s_i.
diff::Var classify_logits(DualEncoderModel& model, diff::Var projected);
diff::Var classify_logits(const DualEncoderModel& model, diff::Var projected);

// gamma = exp(s) clamped to [1, 100]; outside the band it is a constant.
diff::Var gamma(diff::Tape& tape, DualEncoderModel& model);
double gamma_value(const DualEncoderModel& model);

// ---------------------------------------------------------------------------
// Tensor-level convenience (read-only model).

diff::Tensor encode_batch(const DualEncoderModel& model,
                          std::span<const TokenSequence> sequences,
                          Modality modality);
diff::Tensor project(const DualEncoderModel& model, const diff::Tensor& hidden,
                     Modality modality);

struct Classification {
  std::vector<double> logits;
  std::vector<double> probabilities;
};
Classification classify(const DualEncoderModel& model,
                        const diff::Tensor& projected);

}  // namespace multivul::model
