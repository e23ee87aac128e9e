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

#include "multivul/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "multivul/errors.hpp"

namespace multivul::corpus {

using nlohmann::json;

std::string_view modality_name(Modality m) {
  return m == Modality::kCode ? "code" : "text";
}

bool is_valid_cwe(std::string_view tag) {
  if (tag.size() <= 4 || tag.substr(0, 4) != "CWE-") return false;
  return std::all_of(tag.begin() + 4, tag.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

// ---------------------------------------------------------------------------
// JSONL

FunctionRecord record_from_json(const json& object, std::size_t line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  if (!object.is_object()) throw ContractError(where + "expected an object");

  FunctionRecord record;
  auto code = object.find("code");
  if (code == object.end() || !code->is_string()) {
    throw ContractError(where + "missing string field 'code'");
  }
  record.code = code->get<std::string>();
  if (record.code.empty()) throw ContractError(where + "empty 'code'");

  auto label = object.find("label");
  if (label == object.end() ||
      !(label->is_number_integer() || label->is_number_unsigned())) {
    throw ContractError(where + "missing integer field 'label'");
  }
  const auto value = label->get<std::int64_t>();
  if (value != 0 && value != 1) {
    throw ContractError(where + "label must be 0 or 1, got " +
                        std::to_string(value));
  }
  record.label = static_cast<int>(value);

  if (auto id = object.find("id"); id != object.end() && !id->is_null()) {
    if (!id->is_string()) throw ContractError(where + "'id' must be a string");
    record.id = id->get<std::string>();
  } else {
    record.id = "line-" + std::to_string(line);
  }
  if (auto c = object.find("comment"); c != object.end() && !c->is_null()) {
    if (!c->is_string()) {
      throw ContractError(where + "'comment' must be a string");
    }
    record.comment = c->get<std::string>();
  }
  if (auto p = object.find("project"); p != object.end() && !p->is_null()) {
    if (!p->is_string()) {
      throw ContractError(where + "'project' must be a string");
    }
    record.project = p->get<std::string>();
  }
  if (auto c = object.find("cwe"); c != object.end() && !c->is_null()) {
    if (!c->is_array()) {
      throw ContractError(where + "'cwe' must be an array of strings");
    }
    std::vector<std::string> tags;
    for (const auto& tag : *c) {
      if (!tag.is_string() || !is_valid_cwe(tag.get<std::string>())) {
        throw ContractError(where + "invalid CWE tag " + tag.dump());
      }
      tags.push_back(tag.get<std::string>());
    }
    record.cwe = std::move(tags);
  }
  return record;
}

json record_to_json(const FunctionRecord& record) {
  json out = json::object();
  out["id"] = record.id;
  out["code"] = record.code;
  out["label"] = record.label;
  if (record.comment) out["comment"] = *record.comment;
  if (record.cwe) out["cwe"] = *record.cwe;
  if (record.project) out["project"] = *record.project;
  return out;
}

std::vector<FunctionRecord> read_jsonl(std::istream& in) {
  std::vector<FunctionRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (std::all_of(text.begin(), text.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json object;
    try {
      object = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ContractError("line " + std::to_string(line) +
                          ": malformed JSON (" + e.what() + ")");
    }
    records.push_back(record_from_json(object, line));
  }
  return records;
}

std::vector<FunctionRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_jsonl(in);
  } catch (const ContractError& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

void write_jsonl(std::ostream& out, std::span<const FunctionRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void save_jsonl(const std::filesystem::path& path,
                std::span<const FunctionRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_jsonl(out, records);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Tokenization

namespace {

constexpr std::string_view kCodePunctuation = "(){}[];,.*&=<>!+-/%\"'\\";
constexpr std::string_view kTextTrailing = ".,;:";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text, Modality modality) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };

  if (modality == Modality::kCode) {
    for (char c : text) {
      if (is_space(c)) {
        flush();
      } else if (kCodePunctuation.find(c) != std::string_view::npos) {
        flush();
        out.emplace_back(1, c);
      } else {
        current.push_back(c);
      }
    }
    flush();
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      std::string_view word = text.substr(start, i - start);
      if (word.empty()) continue;
      std::size_t core = word.size();
      while (core > 0 && kTextTrailing.find(word[core - 1]) != std::string_view::npos) {
        --core;
      }
      if (core > 0) out.emplace_back(word.substr(0, core));
      for (std::size_t k = core; k < word.size(); ++k) {
        out.emplace_back(1, word[k]);
      }
    }
  }
  if (out.empty()) out.emplace_back(kUnknownToken);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(Modality modality) : modality_(modality) {
  add(std::string(kUnknownToken));
  add(std::string(kPadToken));
}

Vocabulary Vocabulary::from_tokens(Modality modality,
                                   std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kUnknownToken ||
      tokens[1] != kPadToken) {
    throw ContractError("vocabulary: reserved tokens missing");
  }
  Vocabulary vocab(modality);
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (vocab.index_.count(tokens[i])) {
      throw ContractError("vocabulary: duplicate token '" + tokens[i] + "'");
    }
    vocab.add(tokens[i]);
  }
  return vocab;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknownId : it->second;
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

Vocabulary build_vocab(std::span<const FunctionRecord> records,
                       Modality modality, std::size_t max_size) {
  if (max_size < 3) throw ContractError("build_vocab: max-size must be >= 3");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (modality == Modality::kText && !r.comment) continue;
    const std::string& source =
        modality == Modality::kCode ? r.code : *r.comment;
    for (auto& tok : tokenize(source, modality)) {
      if (tok == kUnknownToken || tok == kPadToken) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  // std::map iteration is already lexicographic; stable sort keeps it for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab(modality);
  for (const auto& [tok, count] : ranked) {
    if (vocab.size() >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

TokenSequence encode(std::span<const std::string> tokens,
                     const Vocabulary& vocab, std::size_t max_input_length) {
  if (max_input_length < 1) {
    throw ContractError("encode: max-input-length must be >= 1");
  }
  TokenSequence seq;
  seq.modality = vocab.modality();
  const std::size_t n = std::min(tokens.size(), max_input_length);
  seq.tokens.reserve(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) seq.tokens.push_back(vocab.id(tokens[i]));
  if (seq.tokens.empty()) seq.tokens.push_back(Vocabulary::kUnknownId);
  return seq;
}

// ---------------------------------------------------------------------------
// Statistics

std::size_t count_loc(std::string_view code) {
  return static_cast<std::size_t>(std::count(code.begin(), code.end(), '\n')) +
         1;
}

std::size_t count_nloc(std::string_view code) {
  std::size_t n = 0;
  bool content = false;
  for (char c : code) {
    if (c == '\n') {
      n += content;
      content = false;
    } else if (!is_space(c)) {
      content = true;
    }
  }
  return n + content;
}

std::string format_ratio(std::size_t non_vulnerable, std::size_t vulnerable) {
  char buf[64];
  if (vulnerable == 0) {
    std::snprintf(buf, sizeof(buf), "%.2f:0", non_vulnerable > 0 ? 1.0 : 0.0);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2f:1",
                  static_cast<double>(non_vulnerable) /
                      static_cast<double>(vulnerable));
  }
  return buf;
}

DatasetStats dataset_stats(std::span<const FunctionRecord> records) {
  if (records.empty()) throw ContractError("dataset_stats: no records");
  DatasetStats stats;
  stats.functions = records.size();
  double loc = 0, nloc = 0, tokens = 0;
  for (const auto& r : records) {
    loc += static_cast<double>(count_loc(r.code));
    nloc += static_cast<double>(count_nloc(r.code));
    tokens += static_cast<double>(tokenize(r.code, Modality::kCode).size());
    (r.label == 1 ? stats.vulnerable : stats.non_vulnerable) += 1;
  }
  const auto n = static_cast<double>(records.size());
  stats.avg_loc = loc / n;
  stats.avg_nloc = nloc / n;
  stats.avg_tokens = tokens / n;
  stats.ratio = format_ratio(stats.non_vulnerable, stats.vulnerable);
  return stats;
}

json stats_to_json(const DatasetStats& s) {
  return json{{"functions", s.functions},
              {"avg_loc", s.avg_loc},
              {"avg_nloc", s.avg_nloc},
              {"avg_tokens", s.avg_tokens},
              {"non_vulnerable", s.non_vulnerable},
              {"vulnerable", s.vulnerable},
              {"ratio", s.ratio}};
}

// ---------------------------------------------------------------------------
// Splits

Split stratified_split(std::span<const FunctionRecord> records,
                       std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw ContractError("split: fractions must be positive");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError("split: fractions must sum to 1");
  }

  // Global target per split by largest remainder.
  const auto n = static_cast<double>(records.size());
  std::array<std::size_t, 3> target{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    target[k] = static_cast<std::size_t>(std::floor(fractions[k] * n));
    remainder[k] = fractions[k] * n - static_cast<double>(target[k]);
    assigned += target[k];
  }
  while (assigned < records.size()) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (remainder[k] > remainder[best] + 1e-12) best = k;
    }
    ++target[best];
    remainder[best] = -1.0;
    ++assigned;
  }

  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_label[records[i].label == 1 ? 1 : 0].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, 3> members;
  std::array<std::array<std::size_t, 3>, 2> counts{};
  std::array<std::ptrdiff_t, 3> deficit{};
  for (int k = 0; k < 3; ++k) deficit[k] = static_cast<std::ptrdiff_t>(target[k]);
  for (int label = 0; label < 2; ++label) {
    const auto m = static_cast<double>(by_label[label].size());
    std::size_t used = 0;
    for (int k = 0; k < 3; ++k) {
      counts[label][k] = static_cast<std::size_t>(std::floor(fractions[k] * m));
      used += counts[label][k];
      deficit[k] -= static_cast<std::ptrdiff_t>(counts[label][k]);
    }
  }
  // Leftover units go to the split with the largest remaining deficit (ties
  // toward the later split), at most one extra per (label, split).
  for (int label = 0; label < 2; ++label) {
    std::size_t leftover = by_label[label].size() - counts[label][0] -
                           counts[label][1] - counts[label][2];
    std::array<bool, 3> topped{};
    while (leftover > 0) {
      int best = -1;
      for (int k = 0; k < 3; ++k) {
        if (topped[k]) continue;
        if (best < 0 || deficit[k] >= deficit[best]) best = k;
      }
      ++counts[label][best];
      --deficit[best];
      topped[best] = true;
      --leftover;
    }
  }

  for (int label = 0; label < 2; ++label) {
    auto idx = by_label[label];
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (counts[label][0] == 0) {
      throw ContractError("split: fractions leave the training split without "
                          "label " + std::to_string(label) + " records");
    }
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < counts[label][k]; ++c) {
        members[k].push_back(idx[pos++]);
      }
    }
  }
  if (members[1].empty() || members[2].empty()) {
    throw ContractError("split: fractions yield an empty validation or test "
                        "split");
  }

  Split split;
  std::array<std::vector<FunctionRecord>*, 3> outs = {&split.train,
                                                      &split.validation,
                                                      &split.test};
  for (int k = 0; k < 3; ++k) {
    std::sort(members[k].begin(), members[k].end());
    for (std::size_t i : members[k]) outs[k]->push_back(records[i]);
  }
  return split;
}

}  // namespace multivul::corpus
