// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  AdaMax, the minibatch training loop, evaluation and the
 *         multi-seed ablation harness.
 */
#ifndef VTQA_TRAINING_HPP
#define VTQA_TRAINING_HPP

#include <vtqa/data.hpp>
#include <vtqa/model.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace vtqa {

struct TrainConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 12;
  int batch_size = 32;
  int eval_every = 1;
  int min_answer_frequency = 1;
  std::uint64_t seed = 1;
  /// Optional "token v1 ... vN" file overwriting initial embedding rows.
  std::optional<std::filesystem::path> embedding_file;
  /// Progress lines go here when set.
  std::function<void(const std::string &)> log;

  void validate() const;
};

/// Per-tensor first moment m and infinity norm u, plus the step count.
struct OptimizerState {
  std::map<std::string, Tensor> m, u;
  long step = 0;
};

/// m = b1 m + (1 - b1) g; u = max(b2 u, |g|);
/// theta -= lr / (1 - b1^t) * m / u, skipping entries whose u is 0.
/// Embedding PAD rows are reset to zero afterwards.
void adamax_step(ModelParams &params, const std::map<std::string, Tensor> &grads,
                 OptimizerState &state, const TrainConfig &config);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = -1.0; ///< -1 when not evaluated this epoch
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = -1.0;
  int dropped_out_of_vocab = 0;
  int train_samples = 0;

  nlohmann::json to_json(const ModelConfig &model,
                         const TrainConfig &train) const;
};

/// Settings chosen here rather than taken from the published setup.
nlohmann::json non_paper_defaults(const TrainConfig &train);

/// Word vocabulary over all question, paragraph and property text.
Vocabulary build_word_vocab(const Dataset &train);

struct TrainResult {
  Model model;
  Metrics metrics;
};

/// Trains on splits.train, selects the epoch with the best validation
/// accuracy and, when splits.test is non-empty, reports test accuracy.
TrainResult train(const ModelConfig &model_config, const TrainConfig &config,
                  const DatasetSplits &splits);

struct EvalResult {
  double accuracy = 0.0;
  int correct = 0;
  int total = 0;
  bool empty = false;
};

/// Share of samples whose final-logit argmax is the gold answer.
/// Parallelism is capped by the VTQA_THREADS environment variable.
EvalResult evaluate(const Model &model, const Dataset &data);
EvalResult evaluate(const Model &model, const std::vector<PreparedSample> &data);

/// Mean cross-entropy (for the loss) on one batch; fills `grads` when given.
double batch_loss(const Model &model, std::span<const PreparedSample *const> batch,
                  std::map<std::string, Tensor> *grads);

struct AblationVariant {
  std::string name;
  ModelConfig config;
};

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> runs;
  /// Median test accuracy per variant, in input order.
  std::vector<std::pair<std::string, double>> medians;

  double median(const std::string &variant) const;
  /// Tab-separated: one line per run, then one "median" line per variant.
  void write_tsv(std::ostream &os) const;
  nlohmann::json to_json(const TrainConfig &train) const;
};

/// The four table rows (EF, EF+LF, EF+AR, EF+LF+AR) plus the VQA-only
/// baseline, all on `base` widths.
std::vector<AblationVariant> standard_ablation(const ModelConfig &base);

/// Trains every variant once per seed (seed_base, seed_base + 1, ...).
/// Variants that differ only in inference-time credit share one training
/// run per seed, with best-epoch selection done separately for each.
AblationTable ablate(const std::vector<AblationVariant> &variants,
                     const TrainConfig &config, const DatasetSplits &splits,
                     int n_seeds = 5);

double median(std::vector<double> values);

} // namespace vtqa

#endif // VTQA_TRAINING_HPP
