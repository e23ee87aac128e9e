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

#include "multivul/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "multivul/augment.hpp"
#include "multivul/errors.hpp"

namespace multivul::trainer {

using corpus::Modality;
using corpus::TokenSequence;
using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using nlohmann::json;

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ContractError("batch size must be >= 1");
  if (c.epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) {
    throw ContractError("learning rate must be positive");
  }
  if (c.weight_decay < 0.0) throw ContractError("weight decay must be >= 0");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) {
    throw ContractError("alpha must lie in [0, 1]");
  }
  if (c.code_vocab_max < 3 || c.text_vocab_max < 3) {
    throw ContractError("vocabulary size must be >= 3");
  }
  if (!(c.max_grad_norm > 0.0)) {
    throw ContractError("max gradient norm must be positive");
  }
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) {
    throw ContractError("threshold must lie in (0, 1)");
  }
  objective::validate(c.weights);
}

LossWeights effective_weights(const TrainConfig& c) {
  LossWeights w = c.weights;
  if (c.disable_aug_alignment) w.clip_aug = 0.0;
  if (c.disable_consistency) w.consistency = 0.0;
  if (c.fine_tuning_only) {
    w.clip_orig = 0.0;
    w.clip_aug = 0.0;
    w.consistency = 0.0;
  }
  return w;
}

json config_to_json(const TrainConfig& c) {
  json encoder = model::config_to_json(c.encoder);
  encoder.erase("code_vocab_size");
  encoder.erase("text_vocab_size");
  return json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"loss_weights", objective::weights_to_json(c.weights)},
              {"effective_loss_weights",
               objective::weights_to_json(effective_weights(c))},
              {"alpha", c.alpha},
              {"seed", c.seed},
              {"encoder", encoder},
              {"code_vocab_max", c.code_vocab_max},
              {"text_vocab_max", c.text_vocab_max},
              {"resample_augmentation", c.resample_augmentation},
              {"disable_aug_alignment", c.disable_aug_alignment},
              {"disable_consistency", c.disable_consistency},
              {"fine_tuning_only", c.fine_tuning_only},
              {"select_best", c.select_best},
              {"max_grad_norm", c.max_grad_norm},
              {"threshold", c.threshold}};
}

// ---------------------------------------------------------------------------
// Optimizer

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.grad.mutable_values()) g *= factor;
    }
  }
  return norm;
}

void optimizer_step(std::span<Parameter> params, OptimizerState& state,
                    double learning_rate, double weight_decay) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value.size(), 0.0);
      state.second_moment.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("optimizer: state does not match parameter list");
  }
  for (const auto& p : params) {
    if (!p.grad.all_finite()) {
      throw ContractError("optimizer: non-finite gradient in " + p.name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
  const double correction2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    auto theta = params[k].value.mutable_values();
    auto grad = params[k].grad.values();
    if (m.size() != theta.size()) {
      throw ContractError("optimizer: moment shape mismatch for " +
                          params[k].name);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      theta[i] -= learning_rate * weight_decay * theta[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
    params[k].zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(augment::splitmix64(seed) ^
                      augment::splitmix64(epoch + 0x5eedULL));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

LossBreakdown mean_of(std::span<const StepLog> steps) {
  LossBreakdown m;
  for (const auto& s : steps) {
    m.clip_orig += s.loss.clip_orig;
    m.clip_aug += s.loss.clip_aug;
    m.consistency += s.loss.consistency;
    m.classification += s.loss.classification;
    m.total += s.loss.total;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(1, steps.size()));
  m.clip_orig /= n;
  m.clip_aug /= n;
  m.consistency /= n;
  m.classification /= n;
  m.total /= n;
  return m;
}

std::uint64_t augmentation_seed(const TrainConfig& c, std::size_t epoch) {
  const std::uint64_t base = augment::splitmix64(c.seed ^ 0xa11ce5eedULL);
  return c.resample_augmentation ? augment::splitmix64(base + epoch) : base;
}

}  // namespace

TrainResult train(std::span<const FunctionRecord> train_records,
                  std::span<const FunctionRecord> validation_records,
                  const TrainConfig& config, const StepCallback& on_step) {
  validate(config);
  if (train_records.empty()) throw ContractError("train: empty training set");
  if (validation_records.empty()) {
    throw ContractError("train: a validation split is required");
  }
  for (const auto& r : train_records) {
    if (!r.comment) {
      throw ContractError("train: record '" + r.id +
                          "' has no comment; run the comment step first");
    }
  }
  const LossWeights weights = effective_weights(config);
  const bool needs_text = weights.clip_orig > 0 || weights.consistency > 0;
  const bool needs_aug = weights.clip_aug > 0 || weights.consistency > 0;

  Vocabulary code_vocab =
      corpus::build_vocab(train_records, Modality::kCode, config.code_vocab_max);
  Vocabulary text_vocab =
      corpus::build_vocab(train_records, Modality::kText, config.text_vocab_max);
  model::EncoderConfig enc = config.encoder;
  enc.code_vocab_size = code_vocab.size();
  enc.text_vocab_size = text_vocab.size();
  DualEncoderModel model = model::init_model(enc, config.seed);

  const std::size_t n = train_records.size();
  std::vector<TokenSequence> code_seqs, text_seqs;
  code_seqs.reserve(n);
  text_seqs.reserve(n);
  for (const auto& r : train_records) {
    code_seqs.push_back(corpus::encode(corpus::tokenize(r.code, Modality::kCode),
                                       code_vocab, enc.max_input_length));
    text_seqs.push_back(
        corpus::encode(corpus::tokenize(*r.comment, Modality::kText),
                       text_vocab, enc.max_input_length));
  }

  auto& params = model.parameters();
  OptimizerState state;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  DualEncoderModel best = model;
  double best_f1 = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(n, config.seed, epoch);
    const augment::AugConfig aug{config.alpha, augmentation_seed(config, epoch)};
    const std::size_t first_step = steps.size();

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::vector<TokenSequence> code, text, code_aug, text_aug;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        code.push_back(code_seqs[i]);
        text.push_back(text_seqs[i]);
        labels.push_back(train_records[i].label);
        if (needs_aug) {
          auto [cv, tv] = augment::make_augmented_views(
              train_records[i].id, code_seqs[i].tokens, text_seqs[i].tokens,
              aug);
          code_aug.push_back({std::move(cv.augmented), Modality::kCode});
          text_aug.push_back({std::move(tv.augmented), Modality::kText});
        }
      }

      StepLog log;
      log.step = steps.size();
      try {
        Tape tape;
        objective::BatchEmbeddings batch{
            model::project(model, model::encode(tape, model, code, Modality::kCode),
                           Modality::kCode),
            std::nullopt, std::nullopt, std::nullopt};
        if (needs_text) {
          batch.text = model::project(
              model, model::encode(tape, model, text, Modality::kText),
              Modality::kText);
        }
        if (needs_aug) {
          batch.code_aug = model::project(
              model, model::encode(tape, model, code_aug, Modality::kCode),
              Modality::kCode);
          batch.text_aug = model::project(
              model, model::encode(tape, model, text_aug, Modality::kText),
              Modality::kText);
        }
        Var gamma = needs_text || needs_aug
                        ? model::gamma(tape, model)
                        : diff::constant(tape, Tensor::scalar(model::gamma_value(model)));
        Var probs = diff::sigmoid(model::classify_logits(model, batch.code));
        auto loss = objective::total_loss(batch, gamma, probs, labels, weights);
        if (!std::isfinite(loss.breakdown.total)) {
          throw ContractError("non-finite loss");
        }
        log.loss = loss.breakdown;
        log.gamma = gamma.value().item();
        tape.backward(loss.total.id());
        clip_grad_norm(params, config.max_grad_norm);
        optimizer_step(params, state, config.learning_rate,
                       config.weight_decay);
      } catch (const ContractError& e) {
        throw ContractError("train: aborted at step " +
                            std::to_string(log.step) + ": " + e.what());
      }
      steps.push_back(log);
      if (on_step) on_step(log);
    }

    EpochLog elog;
    elog.epoch = epoch;
    elog.mean_loss = mean_of(std::span(steps).subspan(first_step));
    elog.validation = evaluate::compute_metrics(evaluate::predict(
        model, validation_records, code_vocab, config.threshold));
    if (elog.validation.f1 > best_f1) {
      best_f1 = elog.validation.f1;
      best_epoch = epoch;
      best = model;
    }
    epochs.push_back(elog);
  }

  // Counters describe use of the returned models, not training.
  model.reset_text_invocations();
  best.reset_text_invocations();
  TrainResult result{std::move(model), std::move(best), best_epoch,
                     std::move(code_vocab), std::move(text_vocab),
                     std::move(steps), std::move(epochs)};
  return result;
}

void write_loss_csv(std::ostream& out, std::span<const StepLog> steps) {
  out << "step,clip_orig,clip_aug,consistency,classification,total,gamma\n";
  char buf[512];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.step, s.loss.clip_orig, s.loss.clip_aug,
                  s.loss.consistency, s.loss.classification, s.loss.total,
                  s.gamma);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

std::filesystem::path manifest_path(const std::filesystem::path& prefix) {
  return prefix.string() + ".manifest.json";
}

std::filesystem::path payload_path(const std::filesystem::path& prefix) {
  return prefix.string() + ".params.bin";
}

namespace {

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) {
    out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
  }
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b]))
            << (8 * b);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& prefix) {
  std::string payload;
  json params = json::object();
  for (const auto& p : ckpt.model.parameters()) {
    const std::size_t offset = payload.size();
    for (double v : p.value.values()) put_le(payload, v);
    params[p.name] = {{"shape", p.value.shape()},
                      {"offset", offset},
                      {"length", payload.size() - offset}};
  }
  json manifest{{"format_version", ckpt.format_version},
                {"config", model::config_to_json(ckpt.model.config())},
                {"step", ckpt.step},
                {"seed", ckpt.seed},
                {"payload", payload_path(prefix).filename().string()},
                {"vocab",
                 {{"code", ckpt.code_vocab.tokens()},
                  {"text", ckpt.text_vocab.tokens()}}},
                {"parameters", params}};
  if (!ckpt.provenance.is_null()) manifest["run_config"] = ckpt.provenance;

  std::ofstream m(manifest_path(prefix), std::ios::binary);
  if (!m) throw IoError("cannot write " + manifest_path(prefix).string());
  m << manifest.dump(2) << '\n';
  std::ofstream b(payload_path(prefix), std::ios::binary);
  if (!b) throw IoError("cannot write " + payload_path(prefix).string());
  b.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!m || !b) throw IoError("checkpoint write failed: " + prefix.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& prefix) {
  std::ifstream m(manifest_path(prefix), std::ios::binary);
  if (!m) throw IoError("cannot open " + manifest_path(prefix).string());
  json manifest;
  try {
    manifest = json::parse(m);
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint manifest: ") + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw ContractError("checkpoint format_version " + std::to_string(version) +
                        " is incompatible with supported version " +
                        std::to_string(kCheckpointVersion));
  }

  std::ifstream b(payload_path(prefix), std::ios::binary);
  if (!b) throw IoError("cannot open " + payload_path(prefix).string());
  std::string payload((std::istreambuf_iterator<char>(b)),
                      std::istreambuf_iterator<char>());

  try {
    const model::EncoderConfig config =
        model::config_from_json(manifest.at("config"));
    Checkpoint ckpt{kCheckpointVersion, DualEncoderModel(config),
                    Vocabulary::from_tokens(
                        Modality::kCode,
                        manifest.at("vocab").at("code").get<std::vector<std::string>>()),
                    Vocabulary::from_tokens(
                        Modality::kText,
                        manifest.at("vocab").at("text").get<std::vector<std::string>>()),
                    manifest.at("step").get<std::uint64_t>(),
                    manifest.at("seed").get<std::uint64_t>()};
    if (ckpt.code_vocab.size() != config.code_vocab_size ||
        ckpt.text_vocab.size() != config.text_vocab_size) {
      throw ContractError("checkpoint: vocabulary size disagrees with config");
    }
    if (manifest.contains("run_config")) {
      ckpt.provenance = manifest["run_config"];
    }
    const json& params = manifest.at("parameters");
    for (const auto& [name, entry] : params.items()) {
      Parameter* target = nullptr;
      for (auto& p : ckpt.model.parameters()) {
        if (p.name == name) target = &p;
      }
      if (target == nullptr) {
        throw ContractError("checkpoint: unknown parameter '" + name + "'");
      }
      if (entry.at("shape").get<std::vector<std::size_t>>() !=
          target->value.shape()) {
        throw ContractError("checkpoint: parameter '" + name +
                            "' has the wrong shape");
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto length = entry.at("length").get<std::size_t>();
      if (length != 8 * target->value.size() || offset > payload.size() ||
          payload.size() - offset < length) {
        throw ContractError("checkpoint: truncated payload for parameter '" +
                            name + "'");
      }
      auto values = target->value.mutable_values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = get_le(payload.data() + offset + 8 * i);
      }
    }
    for (const auto& p : ckpt.model.parameters()) {
      if (!params.contains(p.name)) {
        throw ContractError("checkpoint: missing parameter '" + p.name + "'");
      }
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace multivul::trainer
