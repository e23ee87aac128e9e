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

#include "multivul/augment.hpp"

#include <string>

namespace multivul::augment {

void validate(const AugConfig& config) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) {
    throw ContractError("augment: alpha must lie in [0, 1], got " +
                        std::to_string(config.alpha));
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view example_id,
                             Stream stream) {
  return splitmix64(splitmix64(seed ^ fnv1a(example_id)) +
                    static_cast<std::uint64_t>(stream));
}

std::size_t swap_count(double alpha, std::size_t length) {
  if (alpha <= 0.0) return 0;
  const auto n = static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(length)));
  return std::max<std::size_t>(1, n);
}

}  // namespace multivul::augment
