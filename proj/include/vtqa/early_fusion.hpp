// SPDX-License-Identifier: Apache-2.0
/**
 * @file   early_fusion.hpp
 * @brief  Object/sentence cross-attention, feature fusion and
 *         question-guided pooling into answer logits.
 *
 * Shapes: V is O x d (one row per detected object), P is K x d (one row per
 * sentence), fused rows are m x 2d, q is d_q x 1, logits are |answers| x 1.
 */
#ifndef VTQA_EARLY_FUSION_HPP
#define VTQA_EARLY_FUSION_HPP

#include <vtqa/tensor.hpp>

namespace vtqa {

/// Trilinear similarity S_ij = w_s . [v_i; p_j; v_i * p_j]; w_s is 3d x 1.
Var similarity(const Var &visual, const Var &paragraph, const Var &w_s);

/// softmax(S^T) V: each sentence attends over the objects. K x d.
Var attend_paragraph_over_objects(const Var &sim, const Var &visual);

/// [x ; x * y] column concatenation; used for both P^f and V^f.
Var fuse_features(const Var &x, const Var &y);

inline Var fuse_paragraph(const Var &paragraph, const Var &attended_visual) {
  return fuse_features(paragraph, attended_visual);
}

inline Var fuse_visual(const Var &visual, const Var &properties) {
  return fuse_features(visual, properties);
}

/// W_sa: h_a x width, W_qa: h_a x d_q, w_a: h_a x 1.
struct AttentionVars {
  Var w_sa, w_qa, w_a;
};

/// W_p: h_g x width, W_q: h_g x d_q, classifier |answers| x h_g + bias.
struct GateVars {
  Var w_p, w_q, w_cls, b_cls;
};

/// a_i = w_a . (ReLU(W_sa s_i) * ReLU(W_qa q)), alpha = softmax(a). m x 1.
Var question_attention(const Var &rows, const Var &question,
                       const AttentionVars &params);

/// p = sum_i alpha_i s_i; p^q = ReLU(W_p p) * ReLU(W_q q);
/// logits = W_cls p^q + b_cls.
Var pool_and_gate(const Var &rows, const Var &alpha, const Var &question,
                  const GateVars &params);

struct BranchOutput {
  Var alpha;
  Var logits;
};

/// Attention followed by pooling; the same pipeline serves the paragraph
/// and visual branches.
BranchOutput run_branch(const Var &rows, const Var &question,
                        const AttentionVars &attention, const GateVars &gate);

} // namespace vtqa

#endif // VTQA_EARLY_FUSION_HPP
