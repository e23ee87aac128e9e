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

// Dataset ingestion, tokenization, vocabularies, statistics, and splits.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace multivul::corpus {

enum class Modality { kCode, kText };

std::string_view modality_name(Modality m);

// One labeled source function: code c, optional comment t, label y.
struct FunctionRecord {
  std::string id;
  std::string code;
  std::optional<std::string> comment;
  int label = 0;
  std::optional<std::vector<std::string>> cwe;
  std::optional<std::string> project;

  friend bool operator==(const FunctionRecord&,
                         const FunctionRecord&) = default;
};

bool is_valid_cwe(std::string_view tag);

// Throws ContractError naming `line` when the object violates the record
// contract.
FunctionRecord record_from_json(const nlohmann::json& object,
                                std::size_t line);
nlohmann::json record_to_json(const FunctionRecord& record);

std::vector<FunctionRecord> read_jsonl(std::istream& in);
std::vector<FunctionRecord> load_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, std::span<const FunctionRecord> records);
void save_jsonl(const std::filesystem::path& path,
                std::span<const FunctionRecord> records);

inline constexpr std::string_view kUnknownToken = "<unk>";
inline constexpr std::string_view kPadToken = "<pad>";

std::vector<std::string> tokenize(std::string_view text, Modality modality);

using TokenId = std::uint32_t;

class Vocabulary {
 public:
  static constexpr TokenId kUnknownId = 0;
  static constexpr TokenId kPadId = 1;

  explicit Vocabulary(Modality modality);
  // Rebuilds a vocabulary from its id-ordered token list (reserved tokens
  // first), as stored in checkpoints.
  static Vocabulary from_tokens(Modality modality,
                                std::vector<std::string> tokens);

  Modality modality() const noexcept { return modality_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // Appends a new token; returns its id. Existing tokens keep their id.
  TokenId add(const std::string& token);

 private:
  Modality modality_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Most frequent tokens first, ties lexicographic, truncated to max_size ids
// including the two reserved ones. Text vocabularies read record comments.
Vocabulary build_vocab(std::span<const FunctionRecord> records,
                       Modality modality, std::size_t max_size);

struct TokenSequence {
  std::vector<TokenId> tokens;
  Modality modality = Modality::kCode;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

TokenSequence encode(std::span<const std::string> tokens,
                     const Vocabulary& vocab, std::size_t max_input_length);

struct DatasetStats {
  std::size_t functions = 0;
  double avg_loc = 0.0;
  double avg_nloc = 0.0;
  double avg_tokens = 0.0;
  std::size_t non_vulnerable = 0;
  std::size_t vulnerable = 0;
  std::string ratio;  // "non-vulnerable:vulnerable", e.g. "1.19:1"
};

std::size_t count_loc(std::string_view code);
std::size_t count_nloc(std::string_view code);
std::string format_ratio(std::size_t non_vulnerable, std::size_t vulnerable);

DatasetStats dataset_stats(std::span<const FunctionRecord> records);
nlohmann::json stats_to_json(const DatasetStats& stats);

struct Split {
  std::vector<FunctionRecord> train;
  std::vector<FunctionRecord> validation;
  std::vector<FunctionRecord> test;
};

// Per-label stratified partition; each split keeps the input's relative
// order.
Split stratified_split(std::span<const FunctionRecord> records,
                       std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace multivul::corpus
