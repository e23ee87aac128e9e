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

// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Criteria are numbered 1-13.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef MULTIVUL_HAVE_EIGEN
#include <Eigen/Dense>
#endif

#include "../mock_chat.hpp"
#include "../support.hpp"
#include "multivul/augment.hpp"
#include "multivul/cli.hpp"
#include "multivul/commenter.hpp"
#include "multivul/corpus.hpp"
#include "multivul/errors.hpp"
#include "multivul/evaluate.hpp"
#include "multivul/model.hpp"
#include "multivul/objective.hpp"
#include "multivul/synth.hpp"
#include "multivul/trainer.hpp"

namespace {

using namespace multivul;
using diff::Tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a failed expectation; the first few are kept for the report.
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || std::count(detail.begin(), detail.end(), ';') < 3) {
      detail += (detail.empty() ? "" : "; ") + what;
    }
    pass = false;
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto all = testing::primitive_cases(seed);
    auto losses = testing::objective_cases(seed);
    all.insert(all.end(), std::make_move_iterator(losses.begin()),
               std::make_move_iterator(losses.end()));
    for (auto& c : all) {
      const double err = testing::check(c, 1e-4);
      worst = std::max(worst, err);
      ++cases;
      o.expect(err < 1e-4, c.name + " rel err " + fmt("%.3g", err));
    }
  }
  const double secs = seconds_since(t0);
  o.expect(secs < 30.0, "runtime " + fmt("%.1f s", secs));
  o.note(std::to_string(cases) + " cases, max rel err " + fmt("%.2e", worst) + ", " +
         fmt("%.2f s", secs));
  return o;
}

Outcome infonce_laws() {
  Outcome o;
  using objective::clip_loss;
  std::mt19937_64 rng(21);
  o.expect(clip_loss(Tensor::matrix(1, 1, {-4.2})) == 0.0, "B=1 not exactly 0");
  o.expect(clip_loss(Tensor::matrix(1, 1, {37.0})) == 0.0, "B=1 not exactly 0");
  for (std::size_t b : {2u, 3u, 5u, 8u}) {
    for (double v : {-3.0, 0.0, 1.7, 50.0}) {
      const double l = clip_loss(Tensor::filled({b, b}, v));
      o.expect(std::abs(l - std::log(double(b))) < 1e-9,
               "constant B=" + std::to_string(b) + " gives " + fmt("%.12g", l));
    }
  }
  double worst_perm = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + trial % 7;
    const Tensor s = testing::random_matrix(b, b, rng, -10, 10);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor p = Tensor::zeros({b, b});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) p(i, j) = s(perm[i], perm[j]);
    worst_perm = std::max(worst_perm, std::abs(clip_loss(p) - clip_loss(s)));
  }
  o.expect(worst_perm <= 1e-12, "permutation drift " + fmt("%.3g", worst_perm));
  const double hand = clip_loss(Tensor::matrix(2, 2, {2, 0, 0, 2}));
  o.expect(std::abs(hand - std::log1p(std::exp(-2.0))) < 1e-9, "hand value");
  o.expect(std::abs(hand - 0.126928) < 1e-6, "hand value vs 0.126928");
  o.note("S=[[2,0],[0,2]] -> " + fmt("%.9f", hand) + ", permutation drift " +
         fmt("%.1e", worst_perm));
  return o;
}

Outcome consistency_law() {
  Outcome o;
  using objective::consistency_loss;
  const Tensor e1 = Tensor::matrix(1, 2, {1, 0}), e2 = Tensor::matrix(1, 2, {0, 1});
  const double hand = consistency_loss(e1, e2, e1, e2);
  o.expect(std::abs(hand - 2.0) < 1e-12, "orthogonal case " + fmt("%.15g", hand));

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor c = testing::random_matrix(4, 6, rng), t = testing::random_matrix(4, 6, rng);
    o.expect(consistency_loss(c, c, t, t) == 0.0, "equal views give nonzero loss");
    Tensor ca = c;
    ca(trial % 4, trial % 6) += 1e-6;
    o.expect(consistency_loss(c, ca, t, t) > 0.0, "unequal views give zero loss");

    const Tensor d = testing::random_matrix(4, 6, rng);
    auto shifted = [&](double k) {
      Tensor x = c;
      for (std::size_t i = 0; i < x.size(); ++i) x.mutable_values()[i] += k * d.values()[i];
      return x;
    };
    const double base = consistency_loss(c, shifted(1.0), t, t);
    for (double k : {0.5, 2.0, 10.0}) {
      const double scaled = consistency_loss(c, shifted(k), t, t);
      o.expect(std::abs(scaled - k * k * base) <= 1e-9 * k * k * base,
               "scaling by " + fmt("%g", k));
    }
  }
  o.note("B=1 orthogonal case = " + fmt("%.15g", hand));
  return o;
}

Outcome augmentation() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 meta(41);
  std::uniform_int_distribution<int> len(1, 60);
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int> tokens(static_cast<std::size_t>(len(meta)));
    std::iota(tokens.begin(), tokens.end(), 0);
    std::shuffle(tokens.begin(), tokens.end(), meta);
    const double a = alpha(meta);
    augment::Rng rng(static_cast<std::uint64_t>(trial));

    auto swapped = augment::random_swap(tokens, a, rng);
    auto sorted = swapped;
    std::sort(sorted.begin(), sorted.end());
    auto ref = tokens;
    std::sort(ref.begin(), ref.end());
    o.expect(sorted == ref, "swap is not a permutation at trial " + std::to_string(trial));

    const auto kept = augment::random_delete(tokens, a, rng);
    o.expect(!kept.empty(), "deletion emptied the list");
    std::size_t pos = 0;
    for (int t : tokens)
      if (pos < kept.size() && kept[pos] == t) ++pos;
    o.expect(pos == kept.size(), "deletion is not a subsequence");

    o.expect(augment::random_swap(tokens, 0.0, rng) == tokens, "alpha 0 swap");
    o.expect(augment::random_delete(tokens, 0.0, rng) == tokens, "alpha 0 delete");
    o.expect(augment::augment_tokens(tokens, 0.0, rng) == tokens, "alpha 0 augment");
  }
  std::vector<int> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 0);
  std::string means;
  for (double a : {0.1, 0.3, 0.5}) {
    augment::Rng rng(7);
    double total = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      total += static_cast<double>(augment::random_delete(hundred, a, rng).size());
    }
    const double mean = total / 10000.0;
    o.expect(std::abs(mean - (1 - a) * 100) <= 3.0, "mean length " + fmt("%.2f", mean));
    means += (means.empty() ? "" : "/") + fmt("%.2f", mean);
  }
  const double secs = seconds_since(t0);
  o.expect(secs < 20.0, "runtime " + fmt("%.1f s", secs));
  o.note("10000 trials, deletion means " + means + ", " + fmt("%.2f s", secs));
  return o;
}

// ---------------------------------------------------------------------------

trainer::TrainConfig small_train_config() {
  trainer::TrainConfig c;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  c.encoder.embed_dim = 16;
  c.encoder.blocks = 1;
  c.encoder.heads = 2;
  c.encoder.ff_dim = 16;
  c.encoder.max_input_length = 64;
  c.encoder.projection_dim = 8;
  return c;
}

// Plain BCE classifier over projected code embeddings, trained with the
// same initialization, order, clipping and optimizer as the trainer.
std::vector<double> standalone_bce_log(std::span<const corpus::FunctionRecord> train,
                                       const trainer::TrainConfig& cfg) {
  using corpus::Modality;
  const auto code_vocab = corpus::build_vocab(train, Modality::kCode, cfg.code_vocab_max);
  const auto text_vocab = corpus::build_vocab(train, Modality::kText, cfg.text_vocab_max);
  auto enc = cfg.encoder;
  enc.code_vocab_size = code_vocab.size();
  enc.text_vocab_size = text_vocab.size();
  auto m = model::init_model(enc, cfg.seed);
  std::vector<corpus::TokenSequence> seqs;
  for (const auto& r : train) {
    seqs.push_back(corpus::encode(corpus::tokenize(r.code, Modality::kCode), code_vocab,
                                  enc.max_input_length));
  }
  trainer::OptimizerState state;
  std::vector<double> log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = trainer::epoch_order(train.size(), cfg.seed, epoch);
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      std::vector<corpus::TokenSequence> batch;
      std::vector<int> labels;
      for (std::size_t k = start; k < std::min(train.size(), start + cfg.batch_size); ++k) {
        batch.push_back(seqs[order[k]]);
        labels.push_back(train[order[k]].label);
      }
      diff::Tape tape;
      auto z = model::project(m, model::encode(tape, m, batch, Modality::kCode),
                              Modality::kCode);
      auto loss = objective::bce_loss(diff::sigmoid(model::classify_logits(m, z)), labels);
      log.push_back(loss.value().item());
      tape.backward(loss.id());
      trainer::clip_grad_norm(m.parameters(), cfg.max_grad_norm);
      trainer::optimizer_step(m.parameters(), state, cfg.learning_rate, cfg.weight_decay);
    }
  }
  return log;
}

Outcome composition() {
  Outcome o;
  std::mt19937_64 rng(51);
  auto unit = [&](std::size_t b, std::size_t d) {
    Tensor t = testing::random_matrix(b, d, rng);
    for (std::size_t i = 0; i < b; ++i) {
      double n = 0;
      for (std::size_t j = 0; j < d; ++j) n += t(i, j) * t(i, j);
      for (std::size_t j = 0; j < d; ++j) t(i, j) /= std::sqrt(n);
    }
    return t;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + trial % 8;
    const Tensor c = unit(b, 6), t = unit(b, 6), ca = unit(b, 6), ta = unit(b, 6);
    std::vector<double> p(b);
    std::vector<int> y(b);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < 0.5;
    }
    const std::vector<objective::LossWeights> weightings = {
        {}, {0.3, 0.0, 0.2, 1.0}, {0.5, 0.5, 0.0, 1.0}, {0.0, 0.0, 0.0, 1.0}, {1.5, 0.25, 2.0, 0.5}};
    for (const auto& w : weightings) {
      diff::Tape tape;
      objective::BatchEmbeddings batch{diff::constant(tape, c), diff::constant(tape, t),
                                       diff::constant(tape, ca), diff::constant(tape, ta)};
      const auto r = objective::total_loss(
          batch, diff::constant(tape, Tensor::scalar(1.0 + 13.0 * u(rng))),
          diff::constant(tape, Tensor({b}, p)), y, w);
      const auto& k = r.breakdown;
      const double sum = w.clip_orig * k.clip_orig + w.clip_aug * k.clip_aug +
                         w.consistency * k.consistency + w.classification * k.classification;
      worst = std::max(worst, std::abs(k.total - sum));
      o.expect(k.clip_orig >= 0 && k.clip_aug >= 0 && k.consistency >= 0 &&
                   k.classification >= 0,
               "negative component");
    }
  }
  o.expect(worst <= 1e-12, "composition residual " + fmt("%.3g", worst));

  synth::SynthConfig sc;
  sc.functions = 48;
  sc.seed = 5;
  const auto data = synth::generate(sc);
  const std::span<const corpus::FunctionRecord> train(data.data(), 40);
  const std::span<const corpus::FunctionRecord> valid(data.data() + 40, 8);

  auto no_aug = small_train_config();
  no_aug.epochs = 1;
  no_aug.disable_aug_alignment = true;
  o.expect(trainer::effective_weights(no_aug).clip_aug == 0.0, "switch keeps clip_aug weight");
  for (const auto& s : trainer::train(train, valid, no_aug).steps) {
    o.expect(s.loss.clip_aug == 0.0, "clip_aug logged under disable-aug-alignment");
    o.expect(std::abs(s.loss.total - (0.5 * s.loss.clip_orig + 0.1 * s.loss.consistency +
                                      s.loss.classification)) <= 1e-12,
             "training-step composition");
  }

  auto ft = small_train_config();
  ft.fine_tuning_only = true;
  const auto run = trainer::train(train, valid, ft);
  const auto oracle = standalone_bce_log(train, ft);
  o.expect(run.steps.size() == oracle.size(), "step count differs from the standalone loop");
  double drift = 0.0;
  for (std::size_t i = 0; i < std::min(run.steps.size(), oracle.size()); ++i) {
    const auto& l = run.steps[i].loss;
    drift = std::max({drift, std::abs(l.total - oracle[i]),
                      std::abs(l.classification - oracle[i])});
    o.expect(l.clip_orig == 0 && l.clip_aug == 0 && l.consistency == 0,
             "fine-tuning-only logged a contrastive term");
  }
  o.expect(drift <= 1e-12, "fine-tuning log drift " + fmt("%.3g", drift));
  o.note("max residual " + fmt("%.1e", worst) + ", fine-tuning vs standalone BCE drift " +
         fmt("%.1e", drift) + " over " + std::to_string(oracle.size()) + " steps");
  return o;
}

// ---------------------------------------------------------------------------

struct EndToEnd {
  std::vector<corpus::FunctionRecord> test;
  std::optional<trainer::TrainResult> multivul;
  trainer::TrainConfig multivul_config;
  evaluate::PredictionSet predictions;
  std::uint64_t text_calls_after_eval = 0;
};

Outcome end_to_end(EndToEnd& state) {
  Outcome o;
  synth::SynthConfig sc;  // 400 functions, 30% distractors, seed 0
  const auto data = synth::generate(sc);
  const auto split = corpus::stratified_split(data, {0.8, 0.1, 0.1}, 0);
  state.test = split.test;
  double total_secs = 0.0;

  auto run = [&](trainer::TrainConfig cfg, const char* name, double floor) {
    const auto t0 = Clock::now();
    auto result = trainer::train(split.train, split.validation, cfg);
    const double secs = seconds_since(t0);
    total_secs += secs;
    const auto& chosen = result.selected(cfg);
    auto preds = evaluate::predict(chosen, split.test, result.code_vocab);
    const double f1 = evaluate::compute_metrics(preds).f1;
    o.expect(f1 >= floor, std::string(name) + " test F1 " + fmt("%.4f", f1) + " < " +
                              fmt("%.2f", floor));
    o.expect(secs < 120.0, std::string(name) + " run took " + fmt("%.1f s", secs));
    o.note(std::string(name) + " F1 " + fmt("%.4f", f1) + " in " + fmt("%.1f s", secs));
    return std::make_pair(std::move(result), std::move(preds));
  };

  trainer::TrainConfig mv;  // B 8, lr 3e-5, wd 1e-4, 10 epochs, desk encoder
  auto [mv_result, mv_preds] = run(mv, "multivul", 0.95);
  state.text_calls_after_eval = mv_result.selected(mv).text_invocations();
  state.multivul = std::move(mv_result);
  state.multivul_config = mv;
  state.predictions = std::move(mv_preds);

  trainer::TrainConfig ft;
  ft.fine_tuning_only = true;
  run(ft, "fine-tuning-only", 0.90);
  o.expect(total_secs < 120.0, "both runs together took " + fmt("%.1f s", total_secs));
  o.note(std::to_string(split.train.size()) + "/" + std::to_string(split.validation.size()) +
         "/" + std::to_string(split.test.size()) + " split");
  return o;
}

Outcome code_only(const EndToEnd& state) {
  Outcome o;
  if (!state.multivul) {
    o.expect(false, "criterion 6 produced no model");
    return o;
  }
  const auto& m = state.multivul->selected(state.multivul_config);
  o.expect(state.text_calls_after_eval == 0,
           "text encoder ran during evaluation: " + std::to_string(state.text_calls_after_eval));
  const auto report = evaluate::latency_bench(m, state.test, state.multivul->code_vocab, 3, 1);
  o.expect(m.text_invocations() == 0,
           "text encoder ran during bench-latency: " + std::to_string(m.text_invocations()));
  o.note("counter 0 after evaluation and " + std::to_string(report.samples) +
         " timed samples (" + fmt("%.2e s/sample", report.mean_seconds) + ")");
  return o;
}

Outcome threshold_contract(const EndToEnd& state) {
  Outcome o;
  o.expect(evaluate::threshold_label(0.5, 0.5) == 0, "p = delta predicted positive");
  // A zero classifier scores exactly 0.5 everywhere.
  synth::SynthConfig sc;
  sc.functions = 10;
  const auto data = synth::generate(sc);
  const auto vocab = corpus::build_vocab(data, corpus::Modality::kCode, 500);
  model::EncoderConfig enc;
  enc.code_vocab_size = vocab.size();
  enc.text_vocab_size = 3;
  auto zero = model::init_model(enc, 1);
  for (auto& p : zero.parameters())
    if (p.name.rfind("classifier.", 0) == 0) p.value = Tensor::zeros(p.value.shape());
  for (const auto& p : evaluate::predict(zero, data, vocab, 0.5).predictions) {
    o.expect(p.probability == 0.5 && p.predicted == 0, "zero classifier at delta 0.5");
  }
  if (state.predictions.predictions.empty()) {
    o.expect(false, "criterion 6 produced no predictions");
    return o;
  }
  std::size_t last_tp = SIZE_MAX, last_fp = SIZE_MAX;
  std::string tps;
  for (int k = 1; k <= 9; ++k) {
    const auto m = evaluate::compute_metrics(evaluate::rethreshold(state.predictions, k / 10.0));
    o.expect(m.tp <= last_tp && m.fp <= last_fp, "counts not monotone at delta " +
                                                     fmt("%.1f", k / 10.0));
    last_tp = m.tp;
    last_fp = m.fp;
    tps += (tps.empty() ? "" : ",") + std::to_string(m.tp);
  }
  o.note("TP over delta 0.1..0.9: " + tps);
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 40);
  std::size_t degenerate = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    evaluate::PredictionSet set;
    const int n = len(rng);
    // Every fourth set forces a degenerate denominator.
    const int mode = trial % 4;
    for (int i = 0; i < n; ++i) {
      evaluate::Prediction p;
      p.id = std::to_string(i);
      p.probability = mode == 1 ? 0.1 * u(rng) : u(rng);
      p.predicted = evaluate::threshold_label(p.probability, 0.5);
      p.label = mode == 2 ? 0 : (u(rng) < 0.5);
      set.predictions.push_back(p);
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& p : set.predictions) {
      if (p.label == 1 && p.predicted == 1) ++tp;
      if (p.label == 0 && p.predicted == 1) ++fp;
      if (p.label == 1 && p.predicted == 0) ++fn;
      if (p.label == 0 && p.predicted == 0) ++tn;
    }
    degenerate += (tp + fp == 0) || (tp + fn == 0);
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const auto m = evaluate::compute_metrics(set);
    o.expect(m.tp == tp && m.fp == fp && m.fn == fn && m.tn == tn, "confusion counts");
    o.expect(std::abs(m.precision - prec) < 1e-12 && std::abs(m.recall - rec) < 1e-12 &&
                 std::abs(m.f1 - f1) < 1e-12 &&
                 std::abs(m.accuracy - double(tp + tn) / n) < 1e-12,
             "metric values at trial " + std::to_string(trial));
  }
  const auto j = evaluate::metrics_to_json(evaluate::metrics_from_counts(50, 10, 20, 20), "m",
                                           "d", "ID", 0.5);
  o.expect(j["precision"] == 83.33 && j["recall"] == 71.43 && j["f1"] == 76.92 &&
               j["accuracy"] == 70.0,
           "worked example");
  o.note("1000 sets, " + std::to_string(degenerate) + " with a zero denominator");
  return o;
}

#ifdef MULTIVUL_HAVE_EIGEN
Outcome pca() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_vec = 0, worst_ratio = 0, worst_ortho = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 50, d = 5;
    Eigen::MatrixXd q = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return g(rng); });
    q = Eigen::HouseholderQR<Eigen::MatrixXd>(q).householderQ();
    const double scales[d] = {5.0, 3.0, 1.8, 1.0, 0.4};
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) x(i, j) = g(rng) * scales[j];
    x = x * q.transpose();
    Tensor rows = Tensor::zeros({std::size_t(n), std::size_t(d)});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) rows(i, j) = x(i, j);
    const auto p = evaluate::pca_project(rows, {}, trial);

    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (int k = 0; k < 2; ++k) {
      const Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
      double dot = 0, norm = 0;
      for (int j = 0; j < d; ++j) {
        dot += v(j) * p.components[k][j];
        norm += p.components[k][j] * p.components[k][j];
      }
      worst_vec = std::max(worst_vec, 1.0 - std::abs(dot));
      worst_ortho = std::max(worst_ortho, std::abs(norm - 1.0));
      worst_ratio = std::max(worst_ratio, std::abs(p.explained_variance_ratio[k] -
                                                   es.eigenvalues()(d - 1 - k) / cov.trace()));
    }
    double cross = 0;
    for (int j = 0; j < d; ++j) cross += p.components[0][j] * p.components[1][j];
    worst_ortho = std::max(worst_ortho, std::abs(cross));
    o.expect(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1], "ratios ascend");
    for (double r : p.explained_variance_ratio) o.expect(r >= 0 && r <= 1, "ratio outside [0,1]");
  }
  o.expect(worst_ortho < 1e-8, "orthonormality error " + fmt("%.3g", worst_ortho));
  o.expect(worst_vec < 1e-6, "eigenvector disagreement " + fmt("%.3g", worst_vec));
  o.expect(worst_ratio < 1e-6, "ratio disagreement " + fmt("%.3g", worst_ratio));

  const Tensor line = Tensor::matrix(6, 4, {1, 2, 3, 4, 2, 4, 6, 8, -1, -2, -3, -4,
                                            0, 0, 0, 0, 3, 6, 9, 12, 0.5, 1, 1.5, 2});
  const double r1 = evaluate::pca_project(line, {}).explained_variance_ratio[0];
  o.expect(r1 >= 0.9999, "rank-1 first ratio " + fmt("%.6f", r1));
  o.note("20 random 5-D sets vs dense eigensolver, max vector error " + fmt("%.1e", worst_vec) +
         ", rank-1 ratio " + fmt("%.6f", r1));
  return o;
}
#else
Outcome pca() {
  Outcome o;
  o.expect(false, "built without the dense eigensolver oracle");
  return o;
}
#endif

Outcome fn_analysis() {
  Outcome o;
  auto verify = [&](const testing::FnTriple& t) {
    const auto a = evaluate::false_negative_analysis(t.sets, t.gold);
    std::set<std::string> seen, uni;
    for (unsigned m = 1; m < 8; ++m)
      for (const auto& id : a.regions[m]) o.expect(seen.insert(id).second, "overlapping regions");
    for (const auto& f : a.false_negatives) uni.insert(f.begin(), f.end());
    o.expect(seen == uni, "regions do not cover the FN union");
    for (unsigned k = 0; k < 3; ++k) {
      std::size_t sum = 0;
      for (unsigned m = 1; m < 8; ++m)
        if ((m >> k) & 1U) sum += a.region_count(m);
      o.expect(sum == a.false_negatives[k].size(), "region sum differs from method total");
    }
    return a;
  };
  std::mt19937_64 rng(111);
  std::uniform_int_distribution<std::size_t> count(0, 12);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::size_t, 8> counts{};
    for (unsigned m = 1; m < 8; ++m) counts[m] = count(rng);
    const auto a = verify(testing::fn_triple(counts, count(rng), count(rng), {"a", "b", "c"}));
    for (unsigned m = 1; m < 8; ++m) o.expect(a.region_count(m) == counts[m], "region count");
  }
  const auto ref = testing::reference_fn_triple();
  const auto a = verify(ref);
  o.expect(a.false_negatives[0].size() == 151 && a.false_negatives[1].size() == 95 &&
               a.false_negatives[2].size() == 57,
           "reference totals");
  o.expect(a.region_count(0b011) == 33, "both-baselines-recovered region");
  o.expect(a.region_count(0b100) == 0, "method-specific region");
  // Round trip through the serialized report and back into prediction sets.
  const auto j = evaluate::fn_analysis_to_json(a);
  std::array<evaluate::PredictionSet, 3> back;
  for (std::size_t k = 0; k < 3; ++k) {
    back[k] = evaluate::predictions_from_json(evaluate::predictions_to_json(ref.sets[k]));
  }
  const auto again = evaluate::false_negative_analysis(back, ref.gold);
  o.expect(evaluate::fn_analysis_to_json(again) == j, "serialized round trip differs");
  o.note("200 random triples plus reference 151/95/57 with 33 recovered, 0 method-only");
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  Outcome o;
  const auto dir = testing::scratch_dir("acceptance-determinism");
  auto path = [&](const char* name) { return (dir / name).string(); };
  auto call = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    o.expect(code == 0, args[0] + " exited " + std::to_string(code) + ": " + err.str());
    return out.str();
  };
  call({"synth", "--output", path("all.jsonl"), "--functions", "80", "--seed", "3"});
  call({"split", "--input", path("all.jsonl"), "--out-dir", path("split"), "--seed", "3"});
  const std::vector<std::string> train = {
      "train", "--train", path("split/train.jsonl"), "--valid", path("split/validation.jsonl"),
      "--out-dir", path("run"), "--seed", "7", "--epochs", "2",
      "--set", "embedding_dimension=16", "--set", "attention_blocks=1",
      "--set", "feed_forward_dimension=32", "--set", "projection_dimension=8"};
  call(train);
  const std::string first = slurp(path("run/metrics.json"));
  const std::string first_loss = slurp(path("run/loss.csv"));
  call(train);
  o.expect(!first.empty() && slurp(path("run/metrics.json")) == first,
           "metrics JSON differs between identical runs");
  o.expect(slurp(path("run/loss.csv")) == first_loss, "loss log differs between runs");

  const auto ckpt = trainer::load_checkpoint(path("run/model"));
  const auto test = corpus::load_jsonl(path("split/test.jsonl"));
  const auto before = evaluate::predict(ckpt.model, test, ckpt.code_vocab);
  trainer::save_checkpoint(ckpt, path("resaved"));
  o.expect(slurp(path("run/model.params.bin")) == slurp(path("resaved.params.bin")),
           "resaved payload differs");
  const auto loaded = trainer::load_checkpoint(path("resaved"));
  const auto after = evaluate::predict(loaded.model, test, loaded.code_vocab);
  bool identical = before.predictions.size() == after.predictions.size();
  for (std::size_t i = 0; identical && i < before.predictions.size(); ++i) {
    identical = std::memcmp(&before.predictions[i].probability,
                            &after.predictions[i].probability, sizeof(double)) == 0;
  }
  o.expect(identical, "predictions after save/load are not bit-identical");
  o.note("metrics JSON byte-identical across runs, " + std::to_string(test.size()) +
         " predictions bit-identical after save/load");
  return o;
}

Outcome remote_protocol() {
  Outcome o;
  testing::MockChatServer server;
  server.script({{500, ""},
                 {500, ""},
                 {200, "Copies the input into a buffer."},
                 {200, "- mentions the buffer\n- fine"},
                 {200, "Copies src into buf. It then returns the count. Done."}});
  commenter::ProviderConfig cfg;
  cfg.mode = commenter::Mode::kRemote;
  cfg.endpoint = server.endpoint();
  cfg.model = "mock";
  cfg.max_retries = 3;
  cfg.backoff_initial_seconds = 0.001;
  cfg.timeout_seconds = 5;
  corpus::FunctionRecord r;
  r.id = "r";
  r.code = "int f(char *src) { char buf[8]; strcpy(buf, src); return 0; }";
  const auto t = commenter::generate_comment_llm(r, cfg);
  const auto reqs = server.requests();
  o.expect(reqs.size() == 5, "expected 2 failed + 3 turns, saw " + std::to_string(reqs.size()));
  // The three successful turns are the last three requests.
  std::size_t turns = 0;
  for (std::size_t i = 2; i < reqs.size(); ++i) {
    ++turns;
    const std::string system = reqs[i]["messages"][0]["content"].get<std::string>();
    o.expect(system.find(std::string(commenter::kHardConstraints)) != std::string::npos,
             "hard-constraints block missing from turn " + std::to_string(turns));
    o.expect(reqs[i]["messages"].size() == 2 * turns, "history length at turn " +
                                                          std::to_string(turns));
  }
  o.expect(turns == 3, "turn count");
  o.expect(t.final_comment == "Copies src into buf.", "final comment '" + t.final_comment + "'");

  testing::MockChatServer down;
  down.set_fallback({500, ""});
  cfg.endpoint = down.endpoint();
  cfg.max_retries = 2;
  bool raised = false;
  try {
    (void)commenter::generate_comment_llm(r, cfg);
  } catch (const RemoteError& e) {
    raised = e.last_status() == 500;
  }
  o.expect(raised, "persistent 500s did not raise with the last status");
  o.expect(down.requests().size() == 3, "retry count under persistent 500s");
  o.note("5 requests (2 injected 500s), 3 turns with the constraints block, final '" +
         t.final_comment + "'");
  return o;
}

}  // namespace

int main() {
  EndToEnd state;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"InfoNCE laws", infonce_laws},
      {"consistency law", consistency_law},
      {"augmentation invariants", augmentation},
      {"composition and ablation identity", composition},
      {"end-to-end synthetic training", [&] { return end_to_end(state); }},
      {"code-only inference", [&] { return code_only(state); }},
      {"threshold contract", [&] { return threshold_contract(state); }},
      {"metrics oracle", metrics_oracle},
      {"PCA", pca},
      {"false-negative analysis", fn_analysis},
      {"determinism and persistence", determinism},
      {"remote commenter protocol", remote_protocol},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
