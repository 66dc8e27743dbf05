// SPDX-License-Identifier: Apache-2.0
#include <vtqa/early_fusion.hpp>

namespace vtqa {

Var similarity(const Var &visual, const Var &paragraph, const Var &w_s) {
  const Index d = visual.cols();
  if (paragraph.cols() != d)
    throw DimensionError("similarity: visual " + shape_string(visual.value()) +
                         " and paragraph " + shape_string(paragraph.value()) +
                         " widths differ");
  if (w_s.rows() != 3 * d || w_s.cols() != 1)
    throw DimensionError("similarity: weight " + shape_string(w_s.value()) +
                         " is not 3d x 1 for d = " + std::to_string(d));
  Tape &t = visual.tape();
  const Index objects = visual.rows(), sentences = paragraph.rows();
  const Var w_obj = slice_rows(w_s, 0, d);
  const Var w_sent = slice_rows(w_s, d, d);
  const Var w_prod = slice_rows(w_s, 2 * d, d);

  const Var ones_k = t.constant(Tensor::Ones(1, sentences));
  const Var ones_o = t.constant(Tensor::Ones(objects, 1));
  // w_obj . v_i, repeated across columns
  const Var obj_term = matmul(matmul(visual, w_obj), ones_k);
  // w_sent . p_j, repeated across rows
  const Var sent_term = matmul(ones_o, transpose(matmul(paragraph, w_sent)));
  // sum_k v_ik w_prod_k p_jk
  const Var weighted = mul(visual, matmul(ones_o, transpose(w_prod)));
  const Var prod_term = matmul(weighted, transpose(paragraph));
  return add(add(obj_term, sent_term), prod_term);
}

Var attend_paragraph_over_objects(const Var &sim, const Var &visual) {
  if (sim.rows() != visual.rows())
    throw DimensionError("attend_paragraph_over_objects: similarity " +
                         shape_string(sim.value()) + " vs visual " +
                         shape_string(visual.value()));
  return matmul(softmax_rows(transpose(sim)), visual);
}

Var fuse_features(const Var &x, const Var &y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw DimensionError("fuse: misaligned " + shape_string(x.value()) +
                         " and " + shape_string(y.value()));
  return concat_cols(x, mul(x, y));
}

Var question_attention(const Var &rows, const Var &question,
                       const AttentionVars &params) {
  const Var row_hidden = relu(matmul(rows, transpose(params.w_sa)));
  const Var question_hidden = relu(matmul(params.w_qa, question));
  // w_a . (r_i * q_h) == r_i . (q_h * w_a) for every row at once.
  const Var scores = matmul(row_hidden, mul(question_hidden, params.w_a));
  return transpose(softmax_rows(transpose(scores)));
}

Var pool_and_gate(const Var &rows, const Var &alpha, const Var &question,
                  const GateVars &params) {
  if (alpha.rows() != rows.rows() || alpha.cols() != 1)
    throw DimensionError("pool_and_gate: weights " +
                         shape_string(alpha.value()) + " for rows " +
                         shape_string(rows.value()));
  const Var pooled = matmul(transpose(rows), alpha);
  const Var gated = mul(relu(matmul(params.w_p, pooled)),
                        relu(matmul(params.w_q, question)));
  return add(matmul(params.w_cls, gated), params.b_cls);
}

BranchOutput run_branch(const Var &rows, const Var &question,
                        const AttentionVars &attention, const GateVars &gate) {
  Var alpha = question_attention(rows, question, attention);
  Var logits = pool_and_gate(rows, alpha, question, gate);
  return {alpha, logits};
}

} // namespace vtqa
