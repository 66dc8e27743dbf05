// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  VQA-only, TextQA-only and joint VTQA model assembly, parameter
 *         initialization and checkpoint files.
 *
 * Checkpoint layout: 8-byte magic "VTQACKPT", u64 little-endian header
 * length, UTF-8 JSON header {format_version, config, vocabulary, answers,
 * tensors: name -> {shape, offset}}, then raw little-endian float64 blobs
 * in manifest (lexicographic) order. Offsets are relative to the first blob.
 */
#ifndef VTQA_MODEL_HPP
#define VTQA_MODEL_HPP

#include <vtqa/answer_vocab.hpp>
#include <vtqa/data.hpp>
#include <vtqa/decision_fusion.hpp>
#include <vtqa/early_fusion.hpp>
#include <vtqa/tensor.hpp>
#include <vtqa/text_encoders.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtqa {

enum class Variant { VqaOnly, TextQaOnly, Vtqa };

std::string to_string(Variant v);
/// Accepts "vqa", "textqa" and "vtqa" (and the enum spellings).
Variant parse_variant(const std::string &s);

struct Widths {
  int d = 64;      ///< sentence encoder width
  int d_v = 64;    ///< visual feature width; must equal d
  int d_q = 32;    ///< question encoder width
  int h_a = 32;    ///< attention hidden width
  int h_g = 32;    ///< gate hidden width
  int d_emb = 32;  ///< word embedding width

  bool operator==(const Widths &) const = default;
};

struct ModelConfig {
  Variant variant = Variant::Vtqa;
  bool early_fusion = true;
  bool late_fusion = true;
  bool answer_recommendation = true;
  /// Fuse property-sentence encodings into the visual rows ([V; V*C]).
  bool property_fusion = true;
  /// Question and caption text share one embedding table.
  bool share_embeddings = true;
  Widths widths;
  double credit = 1.0;
  std::uint64_t seed = 1;
  int vocab_size = 0;
  int answer_count = 0;

  /// Desk-scale widths.
  static ModelConfig desk(Variant v = Variant::Vtqa);
  /// d = d_v = 2048, d_q = 1024, h_a = h_g = 512, d_emb = 300.
  static ModelConfig paper(Variant v = Variant::Vtqa);

  bool uses_visual() const { return variant != Variant::TextQaOnly; }
  bool uses_paragraph() const { return variant != Variant::VqaOnly; }
  /// Cross-attention between objects and sentences.
  bool uses_cross_attention() const {
    return variant == Variant::Vtqa && early_fusion;
  }
  bool uses_properties() const { return uses_visual() && property_fusion; }
  bool uses_late_fusion() const { return variant == Variant::Vtqa && late_fusion; }
  bool uses_recommendation() const {
    return uses_visual() && answer_recommendation;
  }

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
  bool operator==(const ModelConfig &) const = default;
};

/// Named trainable tensors, iterated in lexicographic name order.
class ModelParams {
public:
  using Map = std::map<std::string, Tensor>;

  Tensor &at(const std::string &name);
  const Tensor &at(const std::string &name) const;
  bool contains(const std::string &name) const { return tensors_.count(name) != 0; }
  void set(const std::string &name, Tensor value) { tensors_[name] = std::move(value); }
  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  bool operator==(const ModelParams &other) const;

private:
  Map tensors_;
};

/// Names of embedding tables whose PAD row is pinned to zero.
bool is_embedding(const std::string &name);
bool is_bias(const std::string &name);
/// Fan-in used by the uniform initializer.
Index fan_in(const std::string &name, const Tensor &t);

/// name -> shape for every tensor the config needs.
std::map<std::string, std::pair<Index, Index>>
parameter_shapes(const ModelConfig &config);

/// Weights U[-1/sqrt(fan_in), 1/sqrt(fan_in)], embeddings U[-0.1, 0.1],
/// biases and PAD rows zero. Deterministic in config.seed.
ModelParams init_params(const ModelConfig &config);

/// Everything needed to run a trained model on raw records.
struct Model {
  ModelConfig config;
  Vocabulary words;
  AnswerVocabulary answers;
  ModelParams params;
};

/// A record tokenized against a model's vocabularies.
struct PreparedSample {
  std::string id;
  TokenIds question;
  std::vector<TokenIds> paragraph;
  std::vector<TokenIds> properties;
  Tensor visual;
  /// Answer class, or -1 when the answer is outside the vocabulary.
  int target = -1;
  RecommendationList recommendation;
};

PreparedSample prepare(const SampleRecord &sample, const Vocabulary &words,
                       const AnswerVocabulary &answers,
                       const ModelConfig &config);

/// ModelParams placed on a tape.
class BoundParams {
public:
  BoundParams(Tape &tape, const ModelParams &params, bool trainable);
  const Var &at(const std::string &name) const;
  /// Rebinds an existing name, e.g. to a gradient-check probe.
  void replace(const std::string &name, const Var &v);
  const std::map<std::string, Var> &vars() const { return vars_; }
  Tape &tape() const { return *tape_; }

  GruVars gru(const std::string &prefix) const;
  AttentionVars attention(const std::string &prefix) const;
  GateVars gate(const std::string &prefix) const;

private:
  Tape *tape_;
  std::map<std::string, Var> vars_;
};

/// Tape-level outputs; `logits` is what the training loss sees (before
/// answer-recommendation credit).
struct ForwardTrace {
  Var logits;
  std::optional<Var> paragraph_logits, visual_logits;
  std::optional<Var> paragraph_alpha, visual_alpha;
};

ForwardTrace forward_on_tape(const BoundParams &params,
                             const ModelConfig &config,
                             const PreparedSample &sample);

struct ForwardResult {
  Vector logits_final; ///< after credit, when enabled
  Vector logits_fused; ///< before credit
  std::optional<Vector> paragraph_logits, visual_logits;
  std::optional<Vector> paragraph_alpha, visual_alpha;
};

ForwardResult forward(const PreparedSample &sample, const Model &model);
ForwardResult forward(const SampleRecord &sample, const Model &model);

/// Predicted answer index (lowest index on ties).
int predict(const PreparedSample &sample, const Model &model);

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class CheckpointMissingError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
};
class CheckpointMismatchError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
};

void save_checkpoint(const Model &model, const std::filesystem::path &path);
Model load_checkpoint(const std::filesystem::path &path);
/// Also checks every tensor against `expected`; the error lists missing,
/// unexpected and mis-shaped tensors.
Model load_checkpoint(const std::filesystem::path &path,
                      const ModelConfig &expected);

} // namespace vtqa

#endif // VTQA_MODEL_HPP
