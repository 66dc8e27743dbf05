// SPDX-License-Identifier: Apache-2.0
/**
 * @file   vtqa_cli.cpp
 * @brief  Command-line entry point: gen-data, train, eval, ablate and
 *         visualize-attention.
 *
 * Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
 */
#include <vtqa/data.hpp>
#include <vtqa/model.hpp>
#include <vtqa/training.hpp>
#include <vtqa/visualize.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

/// Usage/validation problems detected after flag parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<fs::path> sidecar_for(const fs::path &jsonl) {
  fs::path feat = jsonl;
  feat.replace_extension(".feat");
  if (fs::exists(feat))
    return feat;
  return std::nullopt;
}

vtqa::Dataset load_split(const fs::path &dir, const std::string &split,
                         bool required) {
  const fs::path file = dir / (split + ".jsonl");
  if (!fs::exists(file)) {
    if (required)
      throw UsageError("missing dataset file " + file.string());
    return {};
  }
  return vtqa::load_dataset(file, sidecar_for(file));
}

vtqa::DatasetSplits load_splits(const fs::path &dir) {
  if (!fs::is_directory(dir))
    throw UsageError("dataset directory not found: " + dir.string());
  return {load_split(dir, "train", true), load_split(dir, "val", false),
          load_split(dir, "test", false)};
}

vtqa::Dataset load_any(const fs::path &path, const std::string &split) {
  if (fs::is_directory(path))
    return load_split(path, split, true);
  if (!fs::exists(path))
    throw UsageError("dataset file not found: " + path.string());
  return vtqa::load_dataset(path, sidecar_for(path));
}

vtqa::ModelConfig preset_config(const std::string &preset, vtqa::Variant v) {
  if (preset == "desk")
    return vtqa::ModelConfig::desk(v);
  if (preset == "paper")
    return vtqa::ModelConfig::paper(v);
  throw UsageError("unknown preset '" + preset + "' (expected desk or paper)");
}

void write_json(const fs::path &path, const nlohmann::json &j) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void stderr_log(const std::string &line) { std::cerr << line << '\n'; }

struct TrainFlags {
  std::string data;
  std::string variant = "vtqa";
  std::string preset = "desk";
  std::uint64_t seed = 1;
  bool no_lf = false;
  bool no_ar = false;
  double credit = 1.0;
  int epochs = vtqa::TrainConfig{}.epochs;
  int batch_size = vtqa::TrainConfig{}.batch_size;
  double learning_rate = vtqa::TrainConfig{}.learning_rate;
  int min_answer_frequency = 1;
  bool quiet = false;
};

void add_train_flags(CLI::App *cmd, TrainFlags &f, bool with_variant) {
  cmd->add_option("--data", f.data, "dataset directory (train/val/test.jsonl)")
    ->required();
  if (with_variant) {
    cmd->add_option("--variant", f.variant, "vqa, textqa or vtqa");
    cmd->add_flag("--no-lf", f.no_lf, "disable late fusion");
    cmd->add_flag("--no-ar", f.no_ar, "disable answer recommendation");
  }
  cmd->add_option("--preset", f.preset, "desk or paper widths");
  cmd->add_option("--seed", f.seed, "model and shuffle seed");
  cmd->add_option("--credit", f.credit, "answer recommendation credit c")
    ->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", f.epochs)->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.learning_rate)->check(CLI::PositiveNumber);
  cmd->add_option("--min-answer-freq", f.min_answer_frequency)
    ->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet", f.quiet, "no per-epoch progress");
}

vtqa::TrainConfig train_config(const TrainFlags &f) {
  vtqa::TrainConfig tc;
  tc.seed = f.seed;
  tc.epochs = f.epochs;
  tc.batch_size = f.batch_size;
  tc.learning_rate = f.learning_rate;
  tc.min_answer_frequency = f.min_answer_frequency;
  if (!f.quiet)
    tc.log = stderr_log;
  return tc;
}

int run_gen_data(const std::string &out, int n, double clue_rate, double noise,
                 std::uint64_t seed, int dim, bool sidecar) {
  vtqa::SynthConfig sc;
  sc.n_samples = n;
  sc.clue_rate = clue_rate;
  sc.noise = noise;
  sc.seed = seed;
  sc.feature_dim = dim;
  try {
    sc.validate();
  } catch (const vtqa::ConfigError &e) {
    throw UsageError(e.what());
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw UsageError("cannot create output directory " + out);
  const auto splits = vtqa::generate_synthetic(sc);
  const std::pair<const char *, const vtqa::Dataset *> parts[] = {
    {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto &[name, data] : parts) {
    const fs::path file = fs::path(out) / (std::string(name) + ".jsonl");
    std::optional<fs::path> feat;
    if (sidecar)
      feat = fs::path(out) / (std::string(name) + ".feat");
    try {
      vtqa::write_dataset(*data, file, feat);
    } catch (const vtqa::DataError &e) {
      throw UsageError(e.what());
    }
    std::cout << name << '\t' << data->size() << '\n';
  }
  return 0;
}

int run_train(const TrainFlags &f, const std::string &out_path,
              const std::string &metrics_path, const std::string &embeddings) {
  vtqa::ModelConfig mc;
  try {
    mc = preset_config(f.preset, vtqa::parse_variant(f.variant));
  } catch (const vtqa::ConfigError &e) {
    throw UsageError(e.what());
  }
  if (mc.variant == vtqa::Variant::VqaOnly && f.no_lf)
    std::cerr << "warning: --no-lf has no effect on the vqa variant\n";
  if (mc.variant == vtqa::Variant::TextQaOnly && (f.no_lf || f.no_ar))
    std::cerr << "warning: --no-lf/--no-ar have no effect on the textqa variant\n";
  mc.late_fusion = !f.no_lf;
  mc.answer_recommendation = !f.no_ar;
  mc.credit = f.credit;
  mc.seed = f.seed;

  vtqa::TrainConfig tc = train_config(f);
  if (!embeddings.empty())
    tc.embedding_file = embeddings;
  const auto splits = load_splits(f.data);
  const auto result = vtqa::train(mc, tc, splits);
  vtqa::save_checkpoint(result.model, out_path);
  const fs::path metrics =
    metrics_path.empty() ? fs::path(out_path + ".metrics.json") : fs::path(metrics_path);
  write_json(metrics, result.metrics.to_json(result.model.config, tc));
  std::cout << "best_epoch\t" << result.metrics.best_epoch << '\n'
            << "best_val_accuracy\t" << result.metrics.best_val_accuracy << '\n';
  if (result.metrics.test_accuracy >= 0.0)
    std::cout << "test_accuracy\t" << result.metrics.test_accuracy << '\n';
  return 0;
}

int run_eval(const std::string &ckpt, const std::string &data,
             const std::string &split, const std::string &report) {
  const vtqa::Model model = vtqa::load_checkpoint(ckpt);
  const auto dataset = load_any(data, split);
  const auto r = vtqa::evaluate(model, dataset);
  if (r.empty)
    std::cerr << "warning: empty dataset, accuracy reported as 0\n";
  std::cout << "samples\t" << r.total << '\n'
            << "correct\t" << r.correct << '\n'
            << "accuracy\t" << r.accuracy << '\n';
  if (!report.empty())
    write_json(report, {{"samples", r.total},
                        {"correct", r.correct},
                        {"accuracy", r.accuracy},
                        {"empty_dataset", r.empty}});
  return 0;
}

int run_ablate(const TrainFlags &f, int seeds, const std::string &report) {
  vtqa::ModelConfig base;
  base = preset_config(f.preset, vtqa::Variant::Vtqa);
  base.credit = f.credit;
  vtqa::TrainConfig tc = train_config(f);
  const auto splits = load_splits(f.data);
  const auto table =
    vtqa::ablate(vtqa::standard_ablation(base), tc, splits, seeds);
  table.write_tsv(std::cout);
  if (!report.empty())
    write_json(report, table.to_json(tc));
  return 0;
}

int run_visualize(const std::string &ckpt, const std::string &data,
                  const std::string &id, const std::string &out) {
  const vtqa::Model model = vtqa::load_checkpoint(ckpt);
  const auto dataset = load_any(data, "val");
  const vtqa::SampleRecord *found = nullptr;
  for (const auto &r : dataset)
    if (r.id == id)
      found = &r;
  if (!found)
    throw UsageError("no sample with id " + id);
  const auto report = vtqa::attention_report(*found, model);
  std::cout << vtqa::render_text(report);
  std::ofstream svg(out);
  if (!svg)
    throw std::runtime_error("cannot write " + out);
  svg << vtqa::render_svg(report);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Visual + textual question answering with early, late and "
               "answer-recommendation fusion"};
  app.require_subcommand(1);

  auto *gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  std::string gen_out;
  int gen_n = 2000, gen_dim = 64;
  double gen_clue = 0.9, gen_noise = 0.5;
  std::uint64_t gen_seed = 7;
  bool gen_sidecar = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", gen_n, "number of samples");
  gen->add_option("--clue-rate", gen_clue, "fraction of samples with a clue");
  gen->add_option("--noise", gen_noise, "visual feature noise sigma");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--dim", gen_dim, "visual feature width");
  gen->add_flag("--sidecar", gen_sidecar, "store features in .feat files");

  auto *trn = app.add_subcommand("train", "train one model variant");
  TrainFlags train_flags;
  std::string train_out, train_metrics, train_embeddings;
  add_train_flags(trn, train_flags, true);
  trn->add_option("--out", train_out, "checkpoint path")->required();
  trn->add_option("--metrics", train_metrics, "metrics JSON path");
  trn->add_option("--embeddings", train_embeddings,
                  "text file of initial word vectors");

  auto *evl = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_report;
  evl->add_option("--ckpt", eval_ckpt)->required();
  evl->add_option("--data", eval_data, "dataset directory or JSONL file")
    ->required();
  evl->add_option("--split", eval_split, "split used when --data is a directory");
  evl->add_option("--report", eval_report, "JSON report path");

  auto *abl = app.add_subcommand("ablate", "multi-seed fusion ablation");
  TrainFlags ablate_flags;
  int ablate_seeds = 5;
  std::string ablate_report;
  add_train_flags(abl, ablate_flags, false);
  abl->add_option("--seeds", ablate_seeds)->check(CLI::PositiveNumber);
  abl->add_option("--report", ablate_report, "JSON report path");

  auto *vis = app.add_subcommand("visualize-attention",
                                 "render sentence attention for one sample");
  std::string vis_ckpt, vis_data, vis_id, vis_out;
  vis->add_option("--ckpt", vis_ckpt)->required();
  vis->add_option("--data", vis_data, "JSONL file or dataset directory")
    ->required();
  vis->add_option("--id", vis_id)->required();
  vis->add_option("--out", vis_out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen)
      return run_gen_data(gen_out, gen_n, gen_clue, gen_noise, gen_seed, gen_dim,
                          gen_sidecar);
    if (*trn)
      return run_train(train_flags, train_out, train_metrics, train_embeddings);
    if (*evl)
      return run_eval(eval_ckpt, eval_data, eval_split, eval_report);
    if (*abl)
      return run_ablate(ablate_flags, ablate_seeds, ablate_report);
    if (*vis)
      return run_visualize(vis_ckpt, vis_data, vis_id, vis_out);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const vtqa::CheckpointMissingError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
