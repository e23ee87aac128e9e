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

#include "multivul/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "multivul/errors.hpp"

namespace multivul::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw ContractError("setting '" + std::string(key) + "': cannot read '" +
                      std::string(value) + "' as " + std::string(expected));
}

double as_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
  return out;
}

std::uint64_t as_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

bool as_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true/false");
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> kSetters = [] {
    std::vector<std::pair<std::string, Setter>> s;
    auto size = [&](std::string key, auto member) {
      s.emplace_back(std::move(key),
                     [member](RunConfig& c, std::string_view k,
                              std::string_view v) {
                       member(c) = static_cast<std::size_t>(as_unsigned(k, v));
                     });
    };
    auto real = [&](std::string key, auto member) {
      s.emplace_back(std::move(key),
                     [member](RunConfig& c, std::string_view k,
                              std::string_view v) { member(c) = as_double(k, v); });
    };
    auto flag = [&](std::string key, auto member) {
      s.emplace_back(std::move(key),
                     [member](RunConfig& c, std::string_view k,
                              std::string_view v) { member(c) = as_bool(k, v); });
    };
    auto text = [&](std::string key, auto member) {
      s.emplace_back(std::move(key),
                     [member](RunConfig& c, std::string_view,
                              std::string_view v) { member(c) = std::string(v); });
    };

    // Hyperparameter table.
    size("maximum_input_length",
         [](RunConfig& c) -> auto& { return c.train.encoder.max_input_length; });
    size("projection_dimension",
         [](RunConfig& c) -> auto& { return c.train.encoder.projection_dim; });
    size("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    size("training_epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    real("original_view_clip_loss_weight",
         [](RunConfig& c) -> auto& { return c.train.weights.clip_orig; });
    real("augmented_view_clip_loss_weight",
         [](RunConfig& c) -> auto& { return c.train.weights.clip_aug; });
    real("consistency_loss_weight",
         [](RunConfig& c) -> auto& { return c.train.weights.consistency; });
    real("learning_rate",
         [](RunConfig& c) -> auto& { return c.train.learning_rate; });
    real("weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; });

    // Remaining training knobs.
    real("classification_loss_weight",
         [](RunConfig& c) -> auto& { return c.train.weights.classification; });
    real("alpha", [](RunConfig& c) -> auto& { return c.train.alpha; });
    s.emplace_back("seed", [](RunConfig& c, std::string_view k,
                              std::string_view v) {
      c.train.seed = as_unsigned(k, v);
      c.synth.seed = c.train.seed;
    });
    size("embedding_dimension",
         [](RunConfig& c) -> auto& { return c.train.encoder.embed_dim; });
    size("attention_blocks",
         [](RunConfig& c) -> auto& { return c.train.encoder.blocks; });
    size("attention_heads",
         [](RunConfig& c) -> auto& { return c.train.encoder.heads; });
    size("feed_forward_dimension",
         [](RunConfig& c) -> auto& { return c.train.encoder.ff_dim; });
    size("code_vocabulary_size",
         [](RunConfig& c) -> auto& { return c.train.code_vocab_max; });
    size("text_vocabulary_size",
         [](RunConfig& c) -> auto& { return c.train.text_vocab_max; });
    flag("resample_augmentation",
         [](RunConfig& c) -> auto& { return c.train.resample_augmentation; });
    flag("disable_aug_alignment",
         [](RunConfig& c) -> auto& { return c.train.disable_aug_alignment; });
    flag("disable_consistency",
         [](RunConfig& c) -> auto& { return c.train.disable_consistency; });
    flag("fine_tuning_only",
         [](RunConfig& c) -> auto& { return c.train.fine_tuning_only; });
    flag("select_best", [](RunConfig& c) -> auto& { return c.train.select_best; });
    real("max_gradient_norm",
         [](RunConfig& c) -> auto& { return c.train.max_grad_norm; });

    // Evaluation.
    real("threshold", [](RunConfig& c) -> auto& { return c.train.threshold; });
    size("eval_batch_size", [](RunConfig& c) -> auto& { return c.eval_batch_size; });
    size("latency_repetitions",
         [](RunConfig& c) -> auto& { return c.latency_repetitions; });
    size("latency_batch_size",
         [](RunConfig& c) -> auto& { return c.latency_batch_size; });
    real("train_fraction",
         [](RunConfig& c) -> auto& { return c.split_fractions[0]; });
    real("validation_fraction",
         [](RunConfig& c) -> auto& { return c.split_fractions[1]; });
    real("test_fraction", [](RunConfig& c) -> auto& { return c.split_fractions[2]; });

    // Comment provider.
    s.emplace_back("provider_mode", [](RunConfig& c, std::string_view,
                                       std::string_view v) {
      c.provider.mode = commenter::parse_mode(v);
    });
    text("endpoint", [](RunConfig& c) -> auto& { return c.provider.endpoint; });
    text("model", [](RunConfig& c) -> auto& { return c.provider.model; });
    text("token_env", [](RunConfig& c) -> auto& { return c.provider.token_env; });
    real("timeout_seconds",
         [](RunConfig& c) -> auto& { return c.provider.timeout_seconds; });
    s.emplace_back("max_retries", [](RunConfig& c, std::string_view k,
                                     std::string_view v) {
      c.provider.max_retries = static_cast<int>(as_unsigned(k, v));
    });
    real("backoff_initial_seconds",
         [](RunConfig& c) -> auto& { return c.provider.backoff_initial_seconds; });
    real("temperature", [](RunConfig& c) -> auto& { return c.provider.temperature; });
    s.emplace_back("max_tokens", [](RunConfig& c, std::string_view k,
                                    std::string_view v) {
      c.provider.max_tokens = static_cast<int>(as_unsigned(k, v));
    });
    s.emplace_back("concurrency", [](RunConfig& c, std::string_view k,
                                     std::string_view v) {
      c.provider.concurrency = static_cast<int>(as_unsigned(k, v));
    });

    // Synthetic fixture.
    size("synth_functions", [](RunConfig& c) -> auto& { return c.synth.functions; });
    real("synth_vulnerable_fraction",
         [](RunConfig& c) -> auto& { return c.synth.vulnerable_fraction; });
    real("synth_noise_fraction",
         [](RunConfig& c) -> auto& { return c.synth.noise_fraction; });
    return s;
  }();
  return kSetters;
}

}  // namespace

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> keys;
    for (const auto& [key, setter] : setters()) keys.push_back(key);
    return keys;
  }();
  return kKeys;
}

void apply_setting(RunConfig& config, std::string_view key,
                   std::string_view value) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(config, key, trim(value));
      return;
    }
  }
  throw ContractError("unknown setting '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_settings(
    std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    // A '#' inside quotes is part of the value.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ContractError("config line " + std::to_string(line_no) +
                          ": expected key = value");
    }
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ContractError("config line " + std::to_string(line_no) +
                          ": empty key");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

void load_settings_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    for (const auto& [key, value] : parse_settings(buf.str())) {
      apply_setting(config, key, value);
    }
  } catch (const ContractError& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json provider = commenter::config_to_json(c.provider);
  return nlohmann::json{
      {"train", trainer::config_to_json(c.train)},
      {"provider", provider},
      {"synth",
       {{"functions", c.synth.functions},
        {"vulnerable_fraction", c.synth.vulnerable_fraction},
        {"noise_fraction", c.synth.noise_fraction},
        {"seed", c.synth.seed}}},
      {"split_fractions", c.split_fractions},
      {"eval_batch_size", c.eval_batch_size},
      {"latency_repetitions", c.latency_repetitions},
      {"latency_batch_size", c.latency_batch_size},
      {"paths", c.paths},
      {"seed", c.train.seed}};
}

}  // namespace multivul::cli
