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

// Synthetic labelled corpus with a planted unsafe-call pattern. Used as the
// controlled end-to-end training fixture.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "multivul/corpus.hpp"

namespace multivul::synth {

struct SynthConfig {
  std::size_t functions = 400;
  double vulnerable_fraction = 0.5;
  // Share of code tokens that are distractors inserted at random positions.
  double noise_fraction = 0.3;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& config);

// The three contiguous code tokens that make a function vulnerable.
inline constexpr std::string_view kPattern[3] = {"strcpy", "(", "buf"};

// True iff the tokenized code contains kPattern contiguously.
bool has_planted_pattern(std::string_view code);

// Records carry stub comments and label == has_planted_pattern(code).
std::vector<corpus::FunctionRecord> generate(const SynthConfig& config);

}  // namespace multivul::synth
