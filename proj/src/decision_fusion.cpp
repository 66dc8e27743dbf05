// SPDX-License-Identifier: Apache-2.0
#include <vtqa/decision_fusion.hpp>

namespace vtqa {

Var late_fuse(std::span<const Var> logits) {
  if (logits.empty())
    throw ArgumentError("late_fuse: empty logit list");
  for (const auto &l : logits)
    if (l.rows() != logits.front().rows() || l.cols() != logits.front().cols())
      throw ArgumentError("late_fuse: logit shapes differ (" +
                          shape_string(logits.front().value()) + " vs " +
                          shape_string(l.value()) + ")");
  const Var parts[] = {sum_over_list(logits), max_over_list(logits),
                       mean_over_list(logits)};
  return sum_over_list(parts);
}

RecommendationList
build_recommendation_list(std::span<const std::string> object_names,
                          std::span<const std::string> attributes,
                          const AnswerVocabulary &answers, double credit) {
  RecommendationList rec;
  rec.credit = credit;
  for (auto group : {object_names, attributes})
    for (const auto &s : group)
      if (auto idx = answers.find(s))
        rec.indices.insert(*idx);
  return rec;
}

} // namespace vtqa
