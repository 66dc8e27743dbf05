// SPDX-License-Identifier: Apache-2.0
#include <vtqa/answer_vocab.hpp>

#include <algorithm>
#include <cctype>
#include <map>

namespace vtqa {

std::string normalize_answer(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space)
      out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

AnswerVocabulary::AnswerVocabulary(std::span<const std::string> answers) {
  for (const auto &a : answers) {
    std::string key = normalize_answer(a);
    if (!index_.emplace(key, static_cast<int>(answers_.size())).second)
      throw ConfigError("duplicate answer in vocabulary: " + key);
    answers_.push_back(std::move(key));
  }
}

std::optional<int> AnswerVocabulary::find(std::string_view answer) const {
  auto it = index_.find(normalize_answer(answer));
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

AnswerVocabulary build_answer_vocab(std::span<const std::string> answers,
                                    int min_frequency) {
  if (min_frequency < 1)
    throw ConfigError("min_frequency must be >= 1");
  std::map<std::string, int> counts;
  for (const auto &a : answers)
    ++counts[normalize_answer(a)];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto &[answer, n] : counts)
    if (n >= min_frequency)
      kept.emplace_back(answer, n);
  if (kept.empty())
    throw ConfigError("no answer occurs at least " +
                      std::to_string(min_frequency) + " times");
  // counts is ordered by string, so a stable sort keeps lexicographic ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto &a, const auto &b) { return a.second > b.second; });
  std::vector<std::string> ordered;
  ordered.reserve(kept.size());
  for (auto &[answer, n] : kept)
    ordered.push_back(answer);
  return AnswerVocabulary(ordered);
}

} // namespace vtqa
