// SPDX-License-Identifier: Apache-2.0
/**
 * @file   data.hpp
 * @brief  QA sample records, JSON Lines / binary feature I/O and the seeded
 *         synthetic scene generator.
 */
#ifndef VTQA_DATA_HPP
#define VTQA_DATA_HPP

#include <vtqa/answer_vocab.hpp>
#include <vtqa/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtqa {

/// Malformed input files: bad JSON, bad sidecar header, unknown ids.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SampleRecord {
  std::string id;
  Tensor visual; ///< O x d_v
  std::vector<std::string> object_names;
  std::vector<std::vector<std::string>> object_attributes;
  std::vector<std::string> paragraph;
  std::string question;
  std::string answer;
  /// Paragraph row holding the planted answer clue, -1 when absent.
  int clue_index = -1;

  Index object_count() const { return visual.rows(); }
  bool operator==(const SampleRecord &) const = default;
};

/// Throws AlignmentError (or DataError for empty fields) when the record
/// breaks its invariants.
void validate(const SampleRecord &r);

/// Attributes of every object, flattened in object order.
std::vector<std::string> flat_attributes(const SampleRecord &r);

using Dataset = std::vector<SampleRecord>;

/// One record per non-empty JSONL line. Records without inline "visual"
/// are resolved by id from the sidecar, when given.
Dataset load_dataset(const std::filesystem::path &samples,
                     const std::optional<std::filesystem::path> &features = {});

/// Writes JSONL; with `features` the visual matrices go to a sidecar
/// instead of inline.
void write_dataset(const Dataset &records, const std::filesystem::path &samples,
                   const std::optional<std::filesystem::path> &features = {});

/// Binary sidecar: "VTQAFEAT", u64 record count, then per record u32 id
/// length, id bytes, u32 O, u32 d_v and O * d_v little-endian float32.
std::map<std::string, Tensor>
read_feature_sidecar(const std::filesystem::path &path);
void write_feature_sidecar(const std::map<std::string, Tensor> &features,
                           const std::filesystem::path &path);

struct SynthConfig {
  int n_samples = 2000;
  double clue_rate = 0.9;
  double noise = 0.5;
  std::uint64_t seed = 7;
  int feature_dim = 64;
  int min_objects = 2;
  int max_objects = 5;
  double train_fraction = 0.8;
  double val_fraction = 0.1;

  std::vector<std::string> names = {"cow",  "dog",   "cat",   "horse",
                                    "bird", "car",   "boat",  "tree",
                                    "kite", "chair", "truck", "sheep"};
  std::vector<std::string> colors = {"white", "black", "brown", "red",
                                     "blue",  "green", "yellow", "gray"};
  std::vector<std::string> counts = {"two", "three", "four", "five"};
  std::vector<std::string> actions = {"standing", "sitting", "running",
                                      "eating",   "sleeping", "walking"};
  /// Adjectives for the per-object description sentences.
  std::vector<std::string> looks = {"large", "small", "old", "young",
                                    "tall",  "short"};

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
};

struct DatasetSplits {
  Dataset train, val, test;
};

DatasetSplits generate_synthetic(const SynthConfig &config);

} // namespace vtqa

#endif // VTQA_DATA_HPP
