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

#include "multivul/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <string>

#include "multivul/commenter.hpp"
#include "multivul/errors.hpp"

namespace multivul::synth {

namespace {

using Tokens = std::vector<std::string>;

// Statement templates; '#' is replaced by a small integer.
const std::vector<Tokens>& neutral_statements() {
  static const std::vector<Tokens> kStatements = {
      {"n", "=", "n", "+", "#", ";"},
      {"if", "(", "n", ">", "#", ")", "return", "0", ";"},
      {"len", "=", "strlen", "(", "src", ")", ";"},
      {"memset", "(", "buf", ",", "0", ",", "#", ")", ";"},
      {"total", "+=", "len", ";"},
      {"while", "(", "i", "<", "n", ")", "i", "++", ";"},
      {"log_debug", "(", "n", ")", ";"},
      {"ptr", "=", "malloc", "(", "#", ")", ";"},
      {"free", "(", "ptr", ")", ";"},
  };
  return kStatements;
}

// Look-alike copies that never contain the planted pattern.
const std::vector<Tokens>& near_miss_statements() {
  static const std::vector<Tokens> kStatements = {
      {"strncpy", "(", "buf", ",", "src", ",", "#", ")", ";"},
  };
  return kStatements;
}

const Tokens& unsafe_statement() {
  static const Tokens kStatement = {"strcpy", "(", "buf", ",", "src", ")", ";"};
  return kStatement;
}

const std::vector<std::string>& noise_pool() {
  static const std::vector<std::string> kPool = {
      "tmp",   "flag",  "idx",    "cnt",  "val",    "state", "ctx",
      "node",  "head",  "next",   "size", "offset", "mode",  "err",
      "const", "void",  "static", "unsigned", "long", "u8",  "data"};
  return kPool;
}

void append(Tokens& out, const Tokens& stmt, std::mt19937_64& rng) {
  static const char* const kSizes[] = {"8", "16", "32", "64"};
  std::uniform_int_distribution<int> size(0, 3);
  for (const auto& t : stmt) out.push_back(t == "#" ? kSizes[size(rng)] : t);
}

bool contains_pattern(const Tokens& tokens) {
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
    if (tokens[i] == kPattern[0] && tokens[i + 1] == kPattern[1] &&
        tokens[i + 2] == kPattern[2]) {
      return true;
    }
  }
  return false;
}

}  // namespace

void validate(const SynthConfig& c) {
  if (c.functions < 2) throw ContractError("synth: need at least 2 functions");
  if (!(c.vulnerable_fraction > 0.0 && c.vulnerable_fraction < 1.0)) {
    throw ContractError("synth: vulnerable fraction must lie in (0, 1)");
  }
  if (!(c.noise_fraction >= 0.0 && c.noise_fraction < 1.0)) {
    throw ContractError("synth: noise fraction must lie in [0, 1)");
  }
}

bool has_planted_pattern(std::string_view code) {
  return contains_pattern(corpus::tokenize(code, corpus::Modality::kCode));
}

std::vector<corpus::FunctionRecord> generate(const SynthConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  const auto vulnerable = static_cast<std::size_t>(
      config.vulnerable_fraction * static_cast<double>(config.functions) + 0.5);
  std::vector<int> labels(config.functions, 0);
  std::fill_n(labels.begin(), std::min(vulnerable, config.functions), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  const auto& neutral = neutral_statements();
  const auto& near = near_miss_statements();
  const auto& pool = noise_pool();
  std::uniform_int_distribution<std::size_t> pick_neutral(0, neutral.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_near(0, near.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, pool.size() - 1);
  std::uniform_int_distribution<int> statement_count(1, 2);

  std::vector<corpus::FunctionRecord> out;
  out.reserve(config.functions);
  for (std::size_t f = 0; f < config.functions; ++f) {
    std::vector<Tokens> body;
    const int count = statement_count(rng);
    for (int s = 0; s < count; ++s) {
      Tokens stmt;
      append(stmt, neutral[pick_neutral(rng)], rng);
      body.push_back(std::move(stmt));
    }
    // The copy call leads the body, so the first '(' belongs to it and the
    // stub comment names it.
    Tokens copy;
    append(copy, labels[f] == 1 ? unsafe_statement() : near[pick_near(rng)],
           rng);
    body.insert(body.begin(), std::move(copy));

    // Distractors go between statements so they never split the pattern.
    std::size_t real = 0;
    for (const auto& stmt : body) real += stmt.size();
    const auto noise = static_cast<std::size_t>(
        config.noise_fraction / (1.0 - config.noise_fraction) *
            static_cast<double>(real) + 0.5);
    std::vector<Tokens> extra(body.size() + 1);
    std::uniform_int_distribution<std::size_t> slot(0, body.size());
    for (std::size_t k = 0; k < noise; ++k) {
      extra[slot(rng)].push_back(pool[pick_noise(rng)]);
    }

    std::string code = "{\n";
    for (std::size_t s = 0; s <= body.size(); ++s) {
      if (!extra[s].empty()) {
        code += " ";
        for (const auto& t : extra[s]) code += " " + t;
        code += "\n";
      }
      if (s == body.size()) break;
      code += " ";
      for (const auto& t : body[s]) code += " " + t;
      code += "\n";
    }
    code += "  return n ;\n}\n";

    corpus::FunctionRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%04zu", f);
    r.id = id;
    r.code = std::move(code);
    r.label = labels[f];
    r.project = "synth";
    if (r.label == 1) r.cwe = std::vector<std::string>{"CWE-120"};
    r.comment = commenter::generate_comment_stub(r);
    if (has_planted_pattern(r.code) != (r.label == 1)) {
      throw std::logic_error("synth: generated label disagrees with pattern");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace multivul::synth
