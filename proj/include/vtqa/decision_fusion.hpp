// SPDX-License-Identifier: Apache-2.0
/**
 * @file   decision_fusion.hpp
 * @brief  Late fusion of branch logits and answer-recommendation credit.
 *
 * late_fuse adds two extra voters to the plain sum of the branch logits:
 * their elementwise max and their elementwise mean. apply_credit raises
 * the recommended answers by c times the population standard deviation of
 * the incoming logits.
 */
#ifndef VTQA_DECISION_FUSION_HPP
#define VTQA_DECISION_FUSION_HPP

#include <vtqa/answer_vocab.hpp>
#include <vtqa/tensor.hpp>

#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace vtqa {

/// Recommended answer indices (l_c) and the credit scale c.
struct RecommendationList {
  std::set<int> indices;
  double credit = 1.0;
};

template <typename Scalar>
VectorX<Scalar> late_fuse(std::span<const VectorX<Scalar>> logits) {
  if (logits.empty())
    throw ArgumentError("late_fuse: empty logit list");
  const Index n = logits.front().size();
  VectorX<Scalar> total = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> best = logits.front();
  for (const auto &l : logits) {
    if (l.size() != n)
      throw ArgumentError("late_fuse: logit lengths differ (" +
                          std::to_string(n) + " vs " +
                          std::to_string(l.size()) + ")");
    total += l;
    best = best.cwiseMax(l);
  }
  const VectorX<Scalar> avg = total / static_cast<Scalar>(logits.size());
  return total + best + avg;
}

/// Tape form of late_fuse; the training loss is taken on this.
Var late_fuse(std::span<const Var> logits);

/// Population (divide by N) standard deviation.
template <typename Derived>
typename Derived::Scalar population_std(const Eigen::MatrixBase<Derived> &v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0)
    return Scalar(0);
  const auto shifted = v.array() - v(0);
  const Scalar m = shifted.mean();
  return std::sqrt((shifted - m).square().sum() /
                   static_cast<Scalar>(v.size()));
}

template <typename Derived>
VectorX<typename Derived::Scalar>
apply_credit(const Eigen::MatrixBase<Derived> &before,
             const RecommendationList &rec) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> after = before;
  if (rec.indices.empty() || rec.credit == 0.0)
    return after;
  const Scalar boost = static_cast<Scalar>(rec.credit) * population_std(before);
  for (int i : rec.indices) {
    if (i < 0 || i >= after.size())
      throw ArgumentError("apply_credit: index " + std::to_string(i) +
                          " outside " + std::to_string(after.size()) +
                          " answers");
    after[i] += boost;
  }
  return after;
}

/// Answer indices whose normalized string equals a normalized object name
/// or attribute. Unmatched strings are dropped.
RecommendationList
build_recommendation_list(std::span<const std::string> object_names,
                          std::span<const std::string> attributes,
                          const AnswerVocabulary &answers,
                          double credit = 1.0);

/// Lowest index among the maximal entries.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived> &v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best))
      best = i;
  return best;
}

} // namespace vtqa

#endif // VTQA_DECISION_FUSION_HPP
