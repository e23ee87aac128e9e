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

// Random swap (RS) and random deletion (RD) token perturbations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "multivul/errors.hpp"

namespace multivul::augment {

using Rng = std::mt19937_64;

struct AugConfig {
  double alpha = 0.05;  // augmentation strength
  std::uint64_t seed = 0;
};

void validate(const AugConfig& config);

template <class T>
struct ViewPair {
  std::vector<T> original;
  std::vector<T> augmented;
};

enum class Stream : std::uint64_t { kCode = 1, kText = 2 };

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

// Seed of the independent generator for one (example, stream).
std::uint64_t substream_seed(std::uint64_t seed, std::string_view example_id,
                             Stream stream);

// n = max(1, floor(alpha * length)) when alpha > 0, else 0.
std::size_t swap_count(double alpha, std::size_t length);

template <class T>
std::vector<T> random_swap(std::vector<T> tokens, double alpha, Rng& rng) {
  if (tokens.empty()) throw ContractError("random_swap: empty token list");
  const std::size_t n = swap_count(alpha, tokens.size());
  const std::size_t len = tokens.size();
  for (std::size_t s = 0; s < n && len > 1; ++s) {
    std::uniform_int_distribution<std::size_t> first(0, len - 1);
    std::uniform_int_distribution<std::size_t> second(0, len - 2);
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    std::swap(tokens[i], tokens[j]);
  }
  return tokens;
}

template <class T>
std::vector<T> random_delete(std::vector<T> tokens, double alpha, Rng& rng) {
  if (tokens.empty()) throw ContractError("random_delete: empty token list");
  if (alpha <= 0.0) return tokens;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<T> kept;
  kept.reserve(tokens.size());
  for (auto& tok : tokens) {
    if (coin(rng) >= alpha) kept.push_back(tok);
  }
  if (kept.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
    kept.push_back(tokens[pick(rng)]);
  }
  return kept;
}

// Aug_alpha: swap, then delete, with one generator.
template <class T>
std::vector<T> augment_tokens(const std::vector<T>& tokens, double alpha,
                              Rng& rng) {
  return random_delete(random_swap(tokens, alpha, rng), alpha, rng);
}

// Builds (code, text) view pairs. Each stream draws from its own generator,
// seeded from (config.seed, example_id, stream), so either view can be
// regenerated without the other.
template <class T>
std::pair<ViewPair<T>, ViewPair<T>> make_augmented_views(
    std::string_view example_id, const std::vector<T>& code,
    const std::vector<T>& text, const AugConfig& config) {
  validate(config);
  if (code.empty() || text.empty()) {
    throw ContractError("make_augmented_views: empty token list");
  }
  Rng code_rng(substream_seed(config.seed, example_id, Stream::kCode));
  Rng text_rng(substream_seed(config.seed, example_id, Stream::kText));
  ViewPair<T> code_pair{code, augment_tokens(code, config.alpha, code_rng)};
  ViewPair<T> text_pair{text, augment_tokens(text, config.alpha, text_rng)};
  return {std::move(code_pair), std::move(text_pair)};
}

}  // namespace multivul::augment
