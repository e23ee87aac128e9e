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

// Resolved settings for one CLI invocation: a flat key = value file, then
// command-line overrides. Key names follow the hyperparameter table
// (maximum_input_length, projection_dimension, batch_size, ...).

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "multivul/commenter.hpp"
#include "multivul/synth.hpp"
#include "multivul/trainer.hpp"

namespace multivul::cli {

struct RunConfig {
  trainer::TrainConfig train;
  commenter::ProviderConfig provider;
  synth::SynthConfig synth;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::size_t eval_batch_size = 32;
  std::size_t latency_repetitions = 5;
  std::size_t latency_batch_size = 1;
  // Input and output paths as given on the command line.
  std::map<std::string, std::string> paths;
};

// Every key accepted by apply_setting, in documentation order.
const std::vector<std::string>& setting_keys();

// Throws ContractError naming the key on an unknown key or bad value.
void apply_setting(RunConfig& config, std::string_view key,
                   std::string_view value);

// Lines are `key = value`; '#' starts a comment; values may be quoted.
std::vector<std::pair<std::string, std::string>> parse_settings(
    std::string_view text);
void load_settings_file(RunConfig& config, const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

}  // namespace multivul::cli
