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

#include "multivul/model.hpp"

#include <cmath>
#include <random>
#include <string>
#include <type_traits>

#include "multivul/errors.hpp"

namespace multivul::model {

using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using nlohmann::json;

void validate(const EncoderConfig& c) {
  if (c.code_vocab_size < 1 || c.text_vocab_size < 1 || c.embed_dim < 1 ||
      c.heads < 1 || c.ff_dim < 1 || c.max_input_length < 1 ||
      c.projection_dim < 1) {
    throw ContractError("encoder config: all dimensions must be >= 1");
  }
  if (c.embed_dim % c.heads != 0) {
    throw ContractError("encoder config: embedding dimension " +
                        std::to_string(c.embed_dim) +
                        " is not divisible by " + std::to_string(c.heads) +
                        " heads");
  }
}

json config_to_json(const EncoderConfig& c) {
  return json{{"code_vocab_size", c.code_vocab_size},
              {"text_vocab_size", c.text_vocab_size},
              {"embed_dim", c.embed_dim},
              {"blocks", c.blocks},
              {"heads", c.heads},
              {"ff_dim", c.ff_dim},
              {"max_input_length", c.max_input_length},
              {"projection_dim", c.projection_dim}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.code_vocab_size = j.at("code_vocab_size").get<std::size_t>();
  c.text_vocab_size = j.at("text_vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_input_length = j.at("max_input_length").get<std::size_t>();
  c.projection_dim = j.at("projection_dim").get<std::size_t>();
  return c;
}

// ---------------------------------------------------------------------------
// DualEncoderModel

DualEncoderModel::DualEncoderModel(const EncoderConfig& config)
    : config_(config) {
  validate(config_);
  code_ = add_encoder("code", config_.code_vocab_size);
  text_ = add_encoder("text", config_.text_vocab_size);
  const std::size_t d = config_.embed_dim, p = config_.projection_dim;
  code_projection_ = add("code_projection", {d, p});
  text_projection_ = add("text_projection", {d, p});
  log_scale_ = add("logit_scale", {1, 1});
  params_[log_scale_].value.mutable_values()[0] = std::log(kInitialGamma);
  classifier_.hidden = add("classifier.hidden.weight", {p, p});
  classifier_.hidden_bias = add("classifier.hidden.bias", {1, p});
  classifier_.out = add("classifier.out.weight", {p, 1});
  classifier_.out_bias = add("classifier.out.bias", {1, 1});
}

DualEncoderModel::DualEncoderModel(const DualEncoderModel& other)
    : config_(other.config_),
      params_(other.params_),
      code_(other.code_),
      text_(other.text_),
      code_projection_(other.code_projection_),
      text_projection_(other.text_projection_),
      log_scale_(other.log_scale_),
      classifier_(other.classifier_),
      text_calls_(other.text_invocations()) {}

DualEncoderModel& DualEncoderModel::operator=(const DualEncoderModel& other) {
  if (this != &other) {
    DualEncoderModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

DualEncoderModel::DualEncoderModel(DualEncoderModel&& other) noexcept
    : config_(other.config_),
      params_(std::move(other.params_)),
      code_(std::move(other.code_)),
      text_(std::move(other.text_)),
      code_projection_(other.code_projection_),
      text_projection_(other.text_projection_),
      log_scale_(other.log_scale_),
      classifier_(other.classifier_),
      text_calls_(other.text_invocations()) {}

DualEncoderModel& DualEncoderModel::operator=(
    DualEncoderModel&& other) noexcept {
  config_ = other.config_;
  params_ = std::move(other.params_);
  code_ = std::move(other.code_);
  text_ = std::move(other.text_);
  code_projection_ = other.code_projection_;
  text_projection_ = other.text_projection_;
  log_scale_ = other.log_scale_;
  classifier_ = other.classifier_;
  text_calls_.store(other.text_invocations());
  return *this;
}

std::size_t DualEncoderModel::add(std::string name,
                                  std::vector<std::size_t> shape) {
  params_.emplace_back(std::move(name), Tensor::zeros(std::move(shape)));
  return params_.size() - 1;
}

DualEncoderModel::EncoderLayout DualEncoderModel::add_encoder(
    const std::string& prefix, std::size_t vocab) {
  const std::size_t d = config_.embed_dim;
  const std::size_t dh = d / config_.heads;
  EncoderLayout layout;
  layout.embedding = add(prefix + ".embedding", {vocab, d});
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block block;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const std::string hp = bp + ".head" + std::to_string(h);
      Head head;
      head.query = add(hp + ".query", {d, dh});
      head.key = add(hp + ".key", {d, dh});
      head.value = add(hp + ".value", {d, dh});
      head.output = add(hp + ".output", {dh, d});
      block.heads.push_back(head);
    }
    block.attn_bias = add(bp + ".attn.bias", {1, d});
    block.ff_in = add(bp + ".ff_in.weight", {d, config_.ff_dim});
    block.ff_in_bias = add(bp + ".ff_in.bias", {1, config_.ff_dim});
    block.ff_out = add(bp + ".ff_out.weight", {config_.ff_dim, d});
    block.ff_out_bias = add(bp + ".ff_out.bias", {1, d});
    layout.blocks.push_back(std::move(block));
  }
  return layout;
}

Parameter& DualEncoderModel::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& DualEncoderModel::parameter(std::string_view name) const {
  return const_cast<DualEncoderModel*>(this)->parameter(name);
}

DualEncoderModel init_model(const EncoderConfig& config, std::uint64_t seed) {
  DualEncoderModel model(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& p : model.parameters()) {
    const bool is_bias = p.name.ends_with(".bias");
    if (is_bias || p.name == "logit_scale") continue;
    for (double& v : p.value.mutable_values()) v = normal(rng);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

Var leaf(Tape& tape, Parameter& p) { return diff::bind(tape, p); }
Var leaf(Tape& tape, const Parameter& p) {
  return diff::constant(tape, p.value);
}

// Adds a 1 x n bias row to every row of x.
Var add_row(Var x, Var bias) {
  Tape& tape = x.tape();
  const std::size_t rows = x.value().rows();
  Var ones = diff::constant(tape, Tensor::filled({rows, 1}, 1.0));
  return x + diff::matmul(ones, bias);
}

Var rms_norm(Var x, double dim) {
  return diff::scale(diff::row_l2_normalize(x), std::sqrt(dim));
}

template <class Model>
Var encode_impl(Tape& tape, Model& model,
                std::span<const TokenSequence> sequences, Modality modality) {
  if (sequences.empty()) throw ContractError("encode_batch: empty batch");
  const EncoderConfig& cfg = model.config();
  const std::size_t vocab = modality == Modality::kCode ? cfg.code_vocab_size
                                                        : cfg.text_vocab_size;
  auto& params = model.parameters();
  const auto& layout = model.encoder(modality);

  // Pad positions are dropped, which is exactly a padding mask.
  std::vector<std::size_t> ids;
  std::vector<std::vector<std::size_t>> rows(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    if (seq.modality != modality) {
      throw ContractError("encode_batch: sequence " + std::to_string(s) +
                          " has the wrong modality");
    }
    for (corpus::TokenId t : seq.tokens) {
      if (t >= vocab) {
        throw ContractError("encode_batch: token id " + std::to_string(t) +
                            " >= vocabulary size " + std::to_string(vocab));
      }
      if (t == corpus::Vocabulary::kPadId) continue;
      rows[s].push_back(ids.size());
      ids.push_back(t);
    }
    if (rows[s].empty()) {
      throw ContractError("encode_batch: sequence " + std::to_string(s) +
                          " has no non-pad tokens");
    }
    if (rows[s].size() > cfg.max_input_length) {
      throw ContractError("encode_batch: sequence " + std::to_string(s) +
                          " exceeds max-input-length");
    }
  }
  if (modality == Modality::kText) model.note_text_invocation();

  const bool single = sequences.size() == 1;
  auto gather = [&](Var x, std::size_t s) {
    return single ? x : diff::embedding_lookup(x, rows[s]);
  };

  const double d = static_cast<double>(cfg.embed_dim);
  const double inv_sqrt_dh =
      1.0 / std::sqrt(static_cast<double>(cfg.embed_dim / cfg.heads));
  Var x = diff::embedding_lookup(leaf(tape, params[layout.embedding]), ids);

  for (const auto& block : layout.blocks) {
    Var xn = rms_norm(x, d);
    std::optional<Var> attn;
    for (const auto& head : block.heads) {
      Var q = diff::matmul(xn, leaf(tape, params[head.query]));
      Var k = diff::matmul(xn, leaf(tape, params[head.key]));
      Var v = diff::matmul(xn, leaf(tape, params[head.value]));
      std::vector<Var> outs;
      outs.reserve(sequences.size());
      for (std::size_t s = 0; s < sequences.size(); ++s) {
        Var scores = diff::scale(
            diff::matmul(gather(q, s), diff::transpose(gather(k, s))),
            inv_sqrt_dh);
        outs.push_back(diff::matmul(diff::row_softmax(scores), gather(v, s)));
      }
      Var o = single ? outs.front() : diff::concat_rows(outs);
      Var projected = diff::matmul(o, leaf(tape, params[head.output]));
      attn = attn ? *attn + projected : projected;
    }
    x = add_row(x + *attn, leaf(tape, params[block.attn_bias]));

    Var hn = rms_norm(x, d);
    Var hidden = diff::gelu(add_row(diff::matmul(hn, leaf(tape, params[block.ff_in])),
                                    leaf(tape, params[block.ff_in_bias])));
    x = add_row(x + diff::matmul(hidden, leaf(tape, params[block.ff_out])),
                leaf(tape, params[block.ff_out_bias]));
  }

  std::vector<Var> pooled;
  pooled.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    pooled.push_back(diff::mean_pool_rows(gather(x, s)));
  }
  return single ? pooled.front() : diff::concat_rows(pooled);
}

template <class Model>
Var project_impl(Model& model, Var hidden, Modality modality) {
  const std::size_t d = model.config().embed_dim;
  if (hidden.value().rank() != 2 || hidden.value().cols() != d) {
    throw ContractError("project: hidden width " +
                        hidden.value().shape_string() +
                        " does not match hidden dimension " +
                        std::to_string(d));
  }
  Tape& tape = hidden.tape();
  Var w = leaf(tape, model.parameters()[model.projection(modality)]);
  return diff::row_l2_normalize(diff::matmul(hidden, w));
}

template <class Model>
Var classify_impl(Model& model, Var z) {
  const std::size_t p = model.config().projection_dim;
  if (z.value().rank() != 2 || z.value().cols() != p) {
    throw ContractError("classify: input " + z.value().shape_string() +
                        " does not match projection dimension " +
                        std::to_string(p));
  }
  Tape& tape = z.tape();
  auto& params = model.parameters();
  const auto& c = model.classifier();
  Var h = diff::gelu(add_row(diff::matmul(z, leaf(tape, params[c.hidden])),
                             leaf(tape, params[c.hidden_bias])));
  return add_row(diff::matmul(h, leaf(tape, params[c.out])),
                 leaf(tape, params[c.out_bias]));
}

}  // namespace

Var encode(Tape& tape, DualEncoderModel& model,
           std::span<const TokenSequence> sequences, Modality modality) {
  return encode_impl(tape, model, sequences, modality);
}
Var encode(Tape& tape, const DualEncoderModel& model,
           std::span<const TokenSequence> sequences, Modality modality) {
  return encode_impl(tape, model, sequences, modality);
}

Var project(DualEncoderModel& model, Var hidden, Modality modality) {
  return project_impl(model, hidden, modality);
}
Var project(const DualEncoderModel& model, Var hidden, Modality modality) {
  return project_impl(model, hidden, modality);
}

Var classify_logits(DualEncoderModel& model, Var projected) {
  return classify_impl(model, projected);
}
Var classify_logits(const DualEncoderModel& model, Var projected) {
  return classify_impl(model, projected);
}

double gamma_value(const DualEncoderModel& model) {
  const double s = model.parameters()[model.log_scale()].value.item();
  return std::clamp(std::exp(s), kMinGamma, kMaxGamma);
}

Var gamma(Tape& tape, DualEncoderModel& model) {
  Parameter& s = model.parameters()[model.log_scale()];
  const double raw = std::exp(s.value.item());
  if (raw < kMinGamma || raw > kMaxGamma) {
    return diff::constant(tape, Tensor::scalar(gamma_value(model)));
  }
  return diff::exp(diff::bind(tape, s));
}

Tensor encode_batch(const DualEncoderModel& model,
                    std::span<const TokenSequence> sequences,
                    Modality modality) {
  Tape tape;
  return encode(tape, model, sequences, modality).value();
}

Tensor project(const DualEncoderModel& model, const Tensor& hidden,
               Modality modality) {
  Tape tape;
  return project(model, diff::constant(tape, hidden), modality).value();
}

Classification classify(const DualEncoderModel& model,
                        const Tensor& projected) {
  Tape tape;
  Var logits = classify_logits(model, diff::constant(tape, projected));
  Classification out;
  for (double s : logits.value().values()) {
    out.logits.push_back(s);
    out.probabilities.push_back(1.0 / (1.0 + std::exp(-s)));
  }
  return out;
}

}  // namespace multivul::model
