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

#include "multivul/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "multivul/augment.hpp"
#include "multivul/commenter.hpp"
#include "multivul/corpus.hpp"
#include "multivul/errors.hpp"
#include "multivul/evaluate.hpp"
#include "multivul/run_config.hpp"
#include "multivul/synth.hpp"
#include "multivul/trainer.hpp"

namespace multivul::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Settings shared by every subcommand, applied as file < --set < named flags.
struct Overrides {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_file, "key = value settings file");
  sub->add_option("--set", o.sets, "override one setting, KEY=VALUE")
      ->take_all();
}

// A named flag that maps onto a setting key.
void add_setting(CLI::App* sub, Overrides& o, const std::string& flag,
                 const std::string& key, const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.flags.emplace_back(key, v); },
      help);
}

void add_switch(CLI::App* sub, Overrides& o, const std::string& flag,
                const std::string& key, const std::string& value,
                const std::string& help) {
  sub->add_flag_callback(
      flag, [&o, key, value] { o.flags.emplace_back(key, value); }, help);
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (!o.config_file.empty()) {
    load_settings_file(c, o.config_file);
    c.paths["config"] = o.config_file;
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ContractError("--set expects KEY=VALUE, got '" + kv + "'");
    }
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : o.flags) apply_setting(c, key, value);
  return c;
}

json with_provenance(json body, const RunConfig& c) {
  body["run_config"] = to_json(c);
  body["seed"] = c.train.seed;
  return body;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

// JSON to a file, or to out when path is empty.
void emit_json(const json& j, const std::string& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

fs::path sidecar_path(const fs::path& artifact) {
  return artifact.string() + ".provenance.json";
}

void write_sidecar(const fs::path& artifact, const RunConfig& c,
                   json extra = json::object()) {
  extra["artifact"] = artifact.filename().string();
  write_text(sidecar_path(artifact), with_provenance(std::move(extra), c).dump(2) + "\n");
}

void write_records(const fs::path& path,
                   std::span<const corpus::FunctionRecord> records,
                   const RunConfig& c, json extra = json::object()) {
  std::ostringstream buf;
  corpus::write_jsonl(buf, records);
  write_text(path, buf.str());
  write_sidecar(path, c, std::move(extra));
}

std::string method_name(const trainer::TrainConfig& t) {
  if (t.fine_tuning_only) return "fine-tuning-only";
  std::string name = "multivul";
  if (t.disable_aug_alignment) name += "-no-aug-alignment";
  if (t.disable_consistency) name += "-no-consistency";
  return name;
}

json breakdown_json(const objective::LossBreakdown& b) {
  return json{{"clip_orig", b.clip_orig},
              {"clip_aug", b.clip_aug},
              {"consistency", b.consistency},
              {"classification", b.classification},
              {"total", b.total}};
}

void require_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ContractError(flag + " is required");
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_stats(const RunConfig& c, const std::string& input,
              const std::string& output, std::ostream& out) {
  const auto records = corpus::load_jsonl(input);
  emit_json(with_provenance(corpus::stats_to_json(corpus::dataset_stats(records)), c),
            output, out);
  return kExitOk;
}

int cmd_split(const RunConfig& c, const std::string& input,
              const std::string& out_dir, std::ostream& out) {
  const auto records = corpus::load_jsonl(input);
  const auto split =
      corpus::stratified_split(records, c.split_fractions, c.train.seed);
  const fs::path dir(out_dir);
  write_records(dir / "train.jsonl", split.train, c);
  write_records(dir / "validation.jsonl", split.validation, c);
  write_records(dir / "test.jsonl", split.test, c);
  emit_json(with_provenance(json{{"train", split.train.size()},
                                 {"validation", split.validation.size()},
                                 {"test", split.test.size()}},
                            c),
            "", out);
  return kExitOk;
}

int cmd_comment(const RunConfig& c, const std::string& input,
                const std::string& output, std::ostream& err) {
  auto records = corpus::load_jsonl(input);
  auto result = commenter::attach_comments(std::move(records), c.provider);
  json failures = json::array();
  for (std::size_t i = 0; i < result.errors.size(); ++i) {
    if (result.errors[i]) {
      err << "comment: " << result.records[i].id << ": " << *result.errors[i]
          << "\n";
      failures.push_back({{"id", result.records[i].id},
                          {"error", *result.errors[i]}});
    }
  }
  write_records(output, result.records, c,
                json{{"generated", result.generated}, {"failures", failures}});
  return kExitOk;
}

int cmd_augment(const RunConfig& c, const std::string& input,
                const std::string& output) {
  const auto records = corpus::load_jsonl(input);
  const augment::AugConfig aug{c.train.alpha, c.train.seed};
  augment::validate(aug);
  auto join = [](const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    return s;
  };
  std::ostringstream buf;
  for (const auto& r : records) {
    json j = corpus::record_to_json(r);
    const auto code = corpus::tokenize(r.code, corpus::Modality::kCode);
    if (r.comment) {
      const auto text = corpus::tokenize(*r.comment, corpus::Modality::kText);
      auto [cv, tv] = augment::make_augmented_views(r.id, code, text, aug);
      j["code_aug"] = join(cv.augmented);
      j["comment_aug"] = join(tv.augmented);
    } else {
      // Same sub-stream as the paired call, so the code view matches.
      augment::Rng rng(
          augment::substream_seed(aug.seed, r.id, augment::Stream::kCode));
      j["code_aug"] = join(augment::augment_tokens(code, aug.alpha, rng));
    }
    buf << j.dump() << '\n';
  }
  write_text(output, buf.str());
  write_sidecar(output, c);
  return kExitOk;
}

int cmd_train(const RunConfig& c, const std::string& train_path,
              const std::string& valid_path, const std::string& out_dir,
              std::ostream& err) {
  const auto train_records = corpus::load_jsonl(train_path);
  const auto valid_records = corpus::load_jsonl(valid_path);
  const auto result = trainer::train(
      train_records, valid_records, c.train, [&](const trainer::StepLog& s) {
        if (s.step % 50 == 0) {
          err << "step " << s.step << " loss " << s.loss.total << "\n";
        }
      });

  const fs::path dir(out_dir);
  json epochs = json::array();
  for (const auto& e : result.epochs) {
    epochs.push_back(
        {{"epoch", e.epoch},
         {"mean_loss", breakdown_json(e.mean_loss)},
         {"validation", evaluate::metrics_to_json(e.validation,
                                                  method_name(c.train),
                                                  "validation", "ID",
                                                  c.train.threshold)}});
  }
  const json metrics = with_provenance(
      json{{"method", method_name(c.train)},
           {"steps", result.steps.size()},
           {"best_epoch", result.best_epoch},
           {"selected", c.train.select_best ? "best" : "final"},
           {"code_vocabulary_size", result.code_vocab.size()},
           {"text_vocabulary_size", result.text_vocab.size()},
           {"epochs", epochs}},
      c);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");

  std::ostringstream csv;
  trainer::write_loss_csv(csv, result.steps);
  write_text(dir / "loss.csv", csv.str());
  write_sidecar(dir / "loss.csv", c);

  trainer::Checkpoint ckpt{trainer::kCheckpointVersion,
                           result.selected(c.train),
                           result.code_vocab,
                           result.text_vocab,
                           result.steps.size(),
                           c.train.seed,
                           to_json(c)};
  trainer::save_checkpoint(ckpt, dir / "model");
  return kExitOk;
}

json predictions_json(const evaluate::PredictionSet& set, const RunConfig& c) {
  return with_provenance(evaluate::predictions_to_json(set), c);
}

int cmd_eval(const RunConfig& c, const std::string& checkpoint,
             const std::string& input, const std::string& output,
             const std::string& predictions_out, std::string method,
             std::string dataset, std::ostream& out) {
  const auto ckpt = trainer::load_checkpoint(checkpoint);
  const auto records = corpus::load_jsonl(input);
  if (method.empty()) method = "multivul";
  if (dataset.empty()) dataset = fs::path(input).stem().string();
  const auto set = evaluate::predict(ckpt.model, records, ckpt.code_vocab,
                                     c.train.threshold, method,
                                     c.eval_batch_size);
  const auto m = evaluate::compute_metrics(set);
  if (!predictions_out.empty()) {
    emit_json(predictions_json(set, c), predictions_out, out);
  }
  json report = evaluate::metrics_to_json(m, method, dataset, "ID",
                                          c.train.threshold);
  report["text_encoder_invocations"] = ckpt.model.text_invocations();
  emit_json(with_provenance(std::move(report), c), output, out);
  return kExitOk;
}

int cmd_ood(const RunConfig& c, const std::string& checkpoint,
            const std::string& input, const std::string& output,
            const std::string& predictions_out, std::string method,
            const std::string& source, const std::string& target,
            std::ostream& out) {
  const auto ckpt = trainer::load_checkpoint(checkpoint);
  const auto records = corpus::load_jsonl(input);
  if (method.empty()) method = "multivul";
  auto report = evaluate::cross_dataset_eval(ckpt.model, records,
                                             ckpt.code_vocab, source, target,
                                             c.train.threshold);
  report.predictions.method = method;
  if (!predictions_out.empty()) {
    emit_json(predictions_json(report.predictions, c), predictions_out, out);
  }
  json j = evaluate::metrics_to_json(report.metrics, method, target,
                                     report.direction, c.train.threshold);
  j["text_encoder_invocations"] = ckpt.model.text_invocations();
  emit_json(with_provenance(std::move(j), c), output, out);
  return kExitOk;
}

int cmd_pca(const RunConfig& c, const std::string& checkpoint,
            const std::string& input, const std::string& output) {
  const auto ckpt = trainer::load_checkpoint(checkpoint);
  const auto records = corpus::load_jsonl(input);
  const auto z = evaluate::embed_code(ckpt.model, records, ckpt.code_vocab,
                                      c.eval_batch_size);
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.label);
  const auto pca = evaluate::pca_project(z, labels, c.train.seed);

  std::string csv = "id,pc1,pc2,label\n";
  char buf[96];
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%d\n", pca.coordinates[i][0],
                  pca.coordinates[i][1], labels[i]);
    csv += records[i].id + buf;
  }
  write_text(output, csv);
  write_sidecar(output, c,
                json{{"explained_variance_ratio", pca.explained_variance_ratio},
                     {"components", pca.components},
                     {"mean", pca.mean}});
  return kExitOk;
}

int cmd_latency(const RunConfig& c, const std::string& checkpoint,
                const std::string& input, const std::string& output,
                std::ostream& out) {
  const auto ckpt = trainer::load_checkpoint(checkpoint);
  const auto records = corpus::load_jsonl(input);
  const auto report =
      evaluate::latency_bench(ckpt.model, records, ckpt.code_vocab,
                              c.latency_repetitions, c.latency_batch_size);
  json j = evaluate::latency_to_json(report);
  j["text_encoder_invocations"] = ckpt.model.text_invocations();
  emit_json(with_provenance(std::move(j), c), output, out);
  return kExitOk;
}

evaluate::PredictionSet load_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return evaluate::predictions_from_json(json::parse(f));
  } catch (const json::exception& e) {
    throw ContractError(path + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(path + ": " + e.what());
  }
}

int cmd_fn(const RunConfig& c, const std::vector<std::string>& preds,
           const std::string& gold, const std::string& output,
           std::ostream& out) {
  if (preds.size() != 3) {
    throw ContractError("fn-analysis needs exactly three --pred files, got " +
                        std::to_string(preds.size()));
  }
  const std::array<evaluate::PredictionSet, 3> sets{
      load_predictions(preds[0]), load_predictions(preds[1]),
      load_predictions(preds[2])};
  const auto records = corpus::load_jsonl(gold);
  const auto analysis = evaluate::false_negative_analysis(sets, records);
  emit_json(with_provenance(evaluate::fn_analysis_to_json(analysis), c),
            output, out);
  return kExitOk;
}

int cmd_synth(const RunConfig& c, const std::string& output) {
  write_records(output, synth::generate(c.synth), c);
  return kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Multimodal contrastive vulnerability detection toolkit",
               "multivul"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Overrides o;
  std::string input, output, out_dir, train_path, valid_path, checkpoint,
      predictions_out, method, dataset, source, target, gold;
  std::vector<std::string> preds;

  auto* stats = app.add_subcommand("stats", "dataset statistics as JSON");
  stats->add_option("--input", input, "dataset JSONL")->required();
  stats->add_option("--output", output, "JSON path (default: stdout)");

  auto* split = app.add_subcommand("split", "stratified train/validation/test split");
  split->add_option("--input", input, "dataset JSONL")->required();
  split->add_option("--out-dir", out_dir, "output directory")->required();
  add_setting(split, o, "--seed", "seed", "shuffle seed");

  auto* comment = app.add_subcommand("comment", "attach generated comments");
  comment->add_option("--input", input, "dataset JSONL")->required();
  comment->add_option("--output", output, "output JSONL")->required();
  add_setting(comment, o, "--mode", "provider_mode", "stub | remote");
  add_setting(comment, o, "--endpoint", "endpoint", "chat-completions URL");
  add_setting(comment, o, "--model", "model", "remote model name");
  add_setting(comment, o, "--timeout", "timeout_seconds", "request timeout (s)");
  add_setting(comment, o, "--retries", "max_retries", "retries per request");
  add_setting(comment, o, "--temperature", "temperature", "sampling temperature");
  add_setting(comment, o, "--max-tokens", "max_tokens", "reply token cap");
  add_setting(comment, o, "--concurrency", "concurrency", "requests in flight");
  add_setting(comment, o, "--token-env", "token_env", "auth token variable");

  auto* aug = app.add_subcommand("augment", "write augmented views as JSONL");
  aug->add_option("--input", input, "dataset JSONL")->required();
  aug->add_option("--output", output, "output JSONL")->required();
  add_setting(aug, o, "--alpha", "alpha", "perturbation strength");
  add_setting(aug, o, "--seed", "seed", "augmentation seed");

  auto* train = app.add_subcommand("train", "train the dual encoder and classifier");
  train->add_option("--train", train_path, "training JSONL (commented)")->required();
  train->add_option("--valid", valid_path, "validation JSONL")->required();
  train->add_option("--out-dir", out_dir, "output directory")->required();
  add_setting(train, o, "--seed", "seed", "run seed");
  add_setting(train, o, "--epochs", "training_epochs", "training epochs");
  add_setting(train, o, "--batch-size", "batch_size", "batch size");
  add_setting(train, o, "--lr", "learning_rate", "learning rate");
  add_setting(train, o, "--weight-decay", "weight_decay", "weight decay");
  add_setting(train, o, "--alpha", "alpha", "augmentation strength");
  add_switch(train, o, "--disable-aug-alignment", "disable_aug_alignment", "true",
             "drop the augmented-view alignment term");
  add_switch(train, o, "--disable-consistency", "disable_consistency", "true",
             "drop the consistency term");
  add_switch(train, o, "--fine-tuning-only", "fine_tuning_only", "true",
             "classification loss only");
  add_switch(train, o, "--final-epoch", "select_best", "false",
             "keep the final-epoch model instead of the best-validation one");

  auto add_model_eval = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
    sub->add_option("--input", input, "dataset JSONL")->required();
    sub->add_option("--output", output, "JSON path (default: stdout)");
    add_setting(sub, o, "--threshold", "threshold", "decision threshold");
  };
  auto* eval = app.add_subcommand("eval", "predict and score a labelled split");
  add_model_eval(eval);
  eval->add_option("--predictions", predictions_out, "also write predictions JSON");
  eval->add_option("--method", method, "method label for reports");
  eval->add_option("--dataset", dataset, "dataset label for reports");

  auto* ood = app.add_subcommand("ood-eval", "cross-dataset evaluation");
  add_model_eval(ood);
  ood->add_option("--predictions", predictions_out, "also write predictions JSON");
  ood->add_option("--method", method, "method label for reports");
  ood->add_option("--source", source, "training dataset name")->required();
  ood->add_option("--target", target, "target dataset name")->required();

  auto* pca = app.add_subcommand("pca-export", "2-D PCA of code embeddings as CSV");
  pca->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
  pca->add_option("--input", input, "dataset JSONL")->required();
  pca->add_option("--output", output, "CSV path")->required();
  add_setting(pca, o, "--seed", "seed", "power-iteration start seed");

  auto* bench = app.add_subcommand("bench-latency", "code-only inference latency");
  bench->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
  bench->add_option("--input", input, "dataset JSONL")->required();
  bench->add_option("--output", output, "JSON path (default: stdout)");
  add_setting(bench, o, "--repetitions", "latency_repetitions", "timed passes");
  add_setting(bench, o, "--batch-size", "latency_batch_size", "inference batch");

  auto* fn = app.add_subcommand("fn-analysis", "false-negative overlap of three methods");
  fn->add_option("--pred", preds, "predictions JSON (exactly three)")->required();
  fn->add_option("--gold", gold, "gold dataset JSONL")->required();
  fn->add_option("--output", output, "JSON path (default: stdout)");

  auto* syn = app.add_subcommand("synth", "generate the synthetic planted-pattern corpus");
  syn->add_option("--output", output, "output JSONL")->required();
  add_setting(syn, o, "--functions", "synth_functions", "number of functions");
  add_setting(syn, o, "--seed", "seed", "generator seed");

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    add_common(sub, o);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kExitContract;
  }

  try {
    RunConfig c = resolve(o);
    auto note = [&c](const char* key, const std::string& value) {
      if (!value.empty()) c.paths[key] = value;
    };
    note("input", input);
    note("output", output);
    note("out_dir", out_dir);
    note("train", train_path);
    note("valid", valid_path);
    note("checkpoint", checkpoint);
    note("predictions", predictions_out);
    note("gold", gold);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      c.paths["pred" + std::to_string(i)] = preds[i];
    }

    if (stats->parsed()) return cmd_stats(c, input, output, out);
    if (split->parsed()) return cmd_split(c, input, out_dir, out);
    if (comment->parsed()) return cmd_comment(c, input, output, err);
    if (aug->parsed()) return cmd_augment(c, input, output);
    if (train->parsed()) return cmd_train(c, train_path, valid_path, out_dir, err);
    if (eval->parsed()) {
      return cmd_eval(c, checkpoint, input, output, predictions_out, method,
                      dataset, out);
    }
    if (ood->parsed()) {
      return cmd_ood(c, checkpoint, input, output, predictions_out, method,
                     source, target, out);
    }
    if (pca->parsed()) return cmd_pca(c, checkpoint, input, output);
    if (bench->parsed()) return cmd_latency(c, checkpoint, input, output, out);
    if (fn->parsed()) return cmd_fn(c, preds, gold, output, out);
    if (syn->parsed()) return cmd_synth(c, output);
    err << app.help();
    return kExitContract;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const RemoteError& e) {
    err << "error: " << e.what() << " (last HTTP status " << e.last_status()
        << ")\n";
    return kExitIo;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace multivul::cli
