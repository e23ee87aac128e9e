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

// Helpers shared by the unit and acceptance suites.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "multivul/corpus.hpp"
#include "multivul/diff.hpp"
#include "multivul/evaluate.hpp"
#include "multivul/objective.hpp"

namespace multivul::testing {

using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;

inline Tensor random_matrix(std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng, double lo = -2.0,
                            double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

// A named scalar loss over parameters, checked by finite differences.
struct GradCase {
  std::string name;
  std::vector<Parameter> params;
  std::function<Var(Tape&, std::vector<Parameter>&)> loss;
};

// sum(f(x) * w) with a fixed random weight, so every output coordinate
// contributes a distinct slope.
inline Var weighted_sum(Var y, std::mt19937_64& rng) {
  const Tensor& v = y.value();
  const Tensor w = random_matrix(v.rows(), v.cols(), rng);
  return diff::sum_all(diff::hadamard(y, diff::constant(y.tape(), w)));
}

inline double check(GradCase& c, double step = 1e-4) {
  std::vector<Parameter*> ptrs;
  for (auto& p : c.params) ptrs.push_back(&p);
  return diff::grad_check([&](Tape& t) { return c.loss(t, c.params); }, ptrs,
                          step);
}

// One case per primitive, on values drawn from [-2, 2] (log uses [0.5, 2]).
inline std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  auto p = [&](const char* name, std::size_t r, std::size_t c, double lo = -2.0,
               double hi = 2.0) {
    return Parameter(name, random_matrix(r, c, rng, lo, hi));
  };
  // Each loss gets its own weight stream so evaluations are repeatable.
  auto add = [&](std::string name, std::vector<Parameter> params,
                 std::function<Var(Tape&, std::vector<Parameter>&)> f) {
    const std::uint64_t wseed = rng();
    cases.push_back(GradCase{
        std::move(name), std::move(params),
        [f, wseed](Tape& t, std::vector<Parameter>& ps) {
          std::mt19937_64 wrng(wseed);
          return weighted_sum(f(t, ps), wrng);
        }});
  };
  using V = std::vector<Parameter>;
  add("matmul", V{p("a", 3, 4), p("b", 4, 2)}, [](Tape& t, V& ps) {
    return diff::matmul(diff::bind(t, ps[0]), diff::bind(t, ps[1]));
  });
  add("add", V{p("a", 2, 3), p("b", 2, 3)}, [](Tape& t, V& ps) {
    return diff::bind(t, ps[0]) + diff::bind(t, ps[1]);
  });
  add("subtract", V{p("a", 2, 3), p("b", 2, 3)}, [](Tape& t, V& ps) {
    return diff::bind(t, ps[0]) - diff::bind(t, ps[1]);
  });
  add("multiply", V{p("a", 2, 3), p("b", 2, 3)}, [](Tape& t, V& ps) {
    return diff::hadamard(diff::bind(t, ps[0]), diff::bind(t, ps[1]));
  });
  add("scale", V{p("a", 2, 3)}, [](Tape& t, V& ps) {
    return diff::scale(diff::bind(t, ps[0]), -1.7);
  });
  add("exp", V{p("a", 2, 3)},
      [](Tape& t, V& ps) { return diff::exp(diff::bind(t, ps[0])); });
  add("log", V{p("a", 2, 3, 0.5, 2.0)},
      [](Tape& t, V& ps) { return diff::log(diff::bind(t, ps[0])); });
  add("transpose", V{p("a", 2, 3)},
      [](Tape& t, V& ps) { return diff::transpose(diff::bind(t, ps[0])); });
  add("row_softmax", V{p("a", 3, 4)},
      [](Tape& t, V& ps) { return diff::row_softmax(diff::bind(t, ps[0])); });
  add("row_log_sum_exp", V{p("a", 3, 4)}, [](Tape& t, V& ps) {
    return diff::row_log_sum_exp(diff::bind(t, ps[0]));
  });
  add("row_l2_normalize", V{p("a", 3, 4)}, [](Tape& t, V& ps) {
    return diff::row_l2_normalize(diff::bind(t, ps[0]));
  });
  add("mean_all", V{p("a", 3, 4)}, [](Tape& t, V& ps) {
    return diff::mean_all(diff::bind(t, ps[0]));
  });
  add("sum_all", V{p("a", 3, 4)},
      [](Tape& t, V& ps) { return diff::sum_all(diff::bind(t, ps[0])); });
  add("row_squared_distance", V{p("a", 3, 4), p("b", 3, 4)},
      [](Tape& t, V& ps) {
        return diff::row_squared_distance(diff::bind(t, ps[0]),
                                          diff::bind(t, ps[1]));
      });
  add("sigmoid", V{p("a", 2, 5)},
      [](Tape& t, V& ps) { return diff::sigmoid(diff::bind(t, ps[0])); });
  add("gelu", V{p("a", 2, 5)},
      [](Tape& t, V& ps) { return diff::gelu(diff::bind(t, ps[0])); });
  add("embedding_lookup", V{p("table", 5, 3)}, [](Tape& t, V& ps) {
    return diff::embedding_lookup(diff::bind(t, ps[0]), {4, 0, 4, 2});
  });
  add("mean_pool_rows", V{p("a", 4, 3)},
      [](Tape& t, V& ps) { return diff::mean_pool_rows(diff::bind(t, ps[0])); });
  add("concat_rows", V{p("a", 2, 3), p("b", 1, 3)}, [](Tape& t, V& ps) {
    const Var parts[] = {diff::bind(t, ps[0]), diff::bind(t, ps[1])};
    return diff::concat_rows(parts);
  });
  return cases;
}

// Objective-level cases on unit-norm embedding rows.
inline std::vector<GradCase> objective_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t kB = 4, kD = 5;
  auto p = [&](const char* name) {
    return Parameter(name, random_matrix(kB, kD, rng));
  };
  using V = std::vector<Parameter>;
  auto unit = [](Tape& t, Parameter& q) {
    return diff::row_l2_normalize(diff::bind(t, q));
  };
  std::vector<GradCase> cases;
  objective::LossWeights w;  // 0.5 / 0.5 / 0.1 / 1
  const std::vector<int> labels = {1, 0, 0, 1};

  cases.push_back({"clip_loss", V{Parameter("s", random_matrix(kB, kB, rng))},
                   [](Tape& t, V& ps) {
                     return objective::clip_loss(diff::bind(t, ps[0]));
                   }});
  cases.push_back(
      {"dual_clip_loss", V{p("c"), p("t"), p("ca"), p("ta"),
                           Parameter("s", Tensor::scalar(std::log(14.0)))},
       [w, unit](Tape& t, V& ps) {
         Var g = diff::exp(diff::bind(t, ps[4]));
         Var so = objective::similarity(unit(t, ps[0]), unit(t, ps[1]), g);
         Var sa = objective::similarity(unit(t, ps[2]), unit(t, ps[3]), g);
         return objective::dual_clip_loss(so, sa, w);
       }});
  cases.push_back({"consistency_loss", V{p("c"), p("ca"), p("t"), p("ta")},
                   [unit](Tape& t, V& ps) {
                     return objective::consistency_loss(
                         unit(t, ps[0]), unit(t, ps[1]), unit(t, ps[2]),
                         unit(t, ps[3]));
                   }});
  cases.push_back({"bce_loss", V{Parameter("logits", random_matrix(kB, 1, rng))},
                   [labels](Tape& t, V& ps) {
                     return objective::bce_loss(
                         diff::sigmoid(diff::bind(t, ps[0])), labels);
                   }});
  cases.push_back(
      {"total_loss",
       V{p("c"), p("t"), p("ca"), p("ta"),
         Parameter("s", Tensor::scalar(std::log(14.0))),
         Parameter("w", random_matrix(kD, 1, rng))},
       [w, unit, labels](Tape& t, V& ps) {
         objective::BatchEmbeddings b{unit(t, ps[0]), unit(t, ps[1]),
                                      unit(t, ps[2]), unit(t, ps[3])};
         Var probs = diff::sigmoid(diff::matmul(b.code, diff::bind(t, ps[5])));
         return objective::total_loss(b, diff::exp(diff::bind(t, ps[4])), probs,
                                      labels, w)
             .total;
       }});
  return cases;
}

// A fresh directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  std::random_device rd;
  auto dir = std::filesystem::temp_directory_path() /
             ("multivul-" + tag + "-" + std::to_string(rd()) + "-" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

// Three prediction sets over shared gold records whose false-negative
// regions are given by counts[mask], bit k meaning "missed by method k".
// Every other positive is caught by all three; `negatives` adds label-0
// records predicted 0.
struct FnTriple {
  std::array<evaluate::PredictionSet, 3> sets;
  std::vector<corpus::FunctionRecord> gold;
};

inline FnTriple fn_triple(const std::array<std::size_t, 8>& counts,
                          std::size_t caught, std::size_t negatives,
                          const std::array<std::string, 3>& methods) {
  FnTriple t;
  for (std::size_t k = 0; k < 3; ++k) t.sets[k].method = methods[k];
  std::size_t next = 0;
  auto add = [&](int label, unsigned missed_mask) {
    corpus::FunctionRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "f%05zu", next++);
    r.id = id;
    r.code = "int f(){}";
    r.label = label;
    if (label == 1) r.cwe = std::vector<std::string>{next % 2 ? "CWE-787" : "CWE-476"};
    for (unsigned k = 0; k < 3; ++k) {
      evaluate::Prediction p;
      p.id = r.id;
      p.label = label;
      p.predicted = label == 1 && !((missed_mask >> k) & 1U) ? 1 : 0;
      p.probability = p.predicted ? 0.9 : 0.1;
      p.cwe = r.cwe;
      t.sets[k].predictions.push_back(std::move(p));
    }
    t.gold.push_back(std::move(r));
  };
  for (unsigned mask = 1; mask < 8; ++mask)
    for (std::size_t i = 0; i < counts[mask]; ++i) add(1, mask);
  for (std::size_t i = 0; i < caught; ++i) add(1, 0);
  for (std::size_t i = 0; i < negatives; ++i) add(0, 0);
  return t;
}

// Totals 151 / 95 / 57 for (fine-tuning, clip, multivul); 33 missed by
// both baselines but caught by multivul; none missed by multivul alone.
inline FnTriple reference_fn_triple() {
  std::array<std::size_t, 8> counts{};
  counts[0b001] = 63;  // fine-tuning only
  counts[0b010] = 10;  // clip only
  counts[0b011] = 33;  // both baselines, recovered by multivul
  counts[0b100] = 0;   // multivul only
  counts[0b101] = 5;
  counts[0b110] = 2;
  counts[0b111] = 50;
  return fn_triple(counts, 40, 60, {"fine-tuning", "clip", "multivul"});
}

}  // namespace multivul::testing
