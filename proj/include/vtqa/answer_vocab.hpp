// SPDX-License-Identifier: Apache-2.0
/**
 * @file   answer_vocab.hpp
 * @brief  Answer string <-> class index map built by frequency truncation.
 */
#ifndef VTQA_ANSWER_VOCAB_HPP
#define VTQA_ANSWER_VOCAB_HPP

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vtqa {

/// Raised for invalid configurations (model, training or data).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Lowercase, trim and collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view s);

class AnswerVocabulary {
public:
  AnswerVocabulary() = default;
  /// Answers in index order; they are normalized on insertion.
  explicit AnswerVocabulary(std::span<const std::string> answers);

  std::optional<int> find(std::string_view answer) const;
  const std::string &answer(int index) const { return answers_.at(index); }
  int size() const { return static_cast<int>(answers_.size()); }
  const std::vector<std::string> &answers() const { return answers_; }

  bool operator==(const AnswerVocabulary &other) const {
    return answers_ == other.answers_;
  }

private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, int> index_;
};

/// Keeps answers seen at least `min_frequency` times, ordered by descending
/// count with lexicographic tie-breaks. Throws ConfigError if none survive.
AnswerVocabulary build_answer_vocab(std::span<const std::string> answers,
                                    int min_frequency);

} // namespace vtqa

#endif // VTQA_ANSWER_VOCAB_HPP
