// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include <doctest.h>

#include <vtqa/early_fusion.hpp>

#include <algorithm>
#include <numeric>

using namespace vtqa;
using namespace vtqa::testing;

namespace {

struct Branch {
  AttentionVars att;
  GateVars gate;
};

Branch random_branch(Tape &t, Index width, Index dq, Index ha, Index hg,
                     Index answers, std::mt19937_64 &rng) {
  return {{t.constant(uniform(ha, width, rng)), t.constant(uniform(ha, dq, rng)),
           t.constant(uniform(ha, 1, rng))},
          {t.constant(uniform(hg, width, rng)), t.constant(uniform(hg, dq, rng)),
           t.constant(uniform(answers, hg, rng)), t.constant(uniform(answers, 1, rng))}};
}

Tensor permute_rows(const Tensor &x, const std::vector<Index> &perm) {
  Tensor y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  return y;
}

} // namespace

TEST_CASE("similarity") {
  Tape t;
  std::mt19937_64 rng(1);
  const Var v = t.constant(uniform(3, 4, rng));
  const Var p = t.constant(uniform(2, 4, rng));
  CHECK(similarity(v, p, t.constant(Tensor::Zero(12, 1))).value() == Tensor::Zero(3, 2));

  const Tensor s = similarity(t.constant(from_rows({{1, 2}})), t.constant(from_rows({{3, 4}})),
                              t.constant(Tensor::Ones(6, 1)))
                     .value();
  CHECK(s == from_rows({{21}}));

  const Var ws = t.constant(uniform(12, 1, rng));
  const Tensor s1 = similarity(v, p, ws).value();
  const Tensor swapped = permute_rows(p.value(), {1, 0});
  const Tensor s2 = similarity(v, t.constant(swapped), ws).value();
  CHECK(s2.col(0) == s1.col(1));
  CHECK(s2.col(1) == s1.col(0));

  CHECK_THROWS_AS(similarity(v, t.constant(Tensor::Zero(2, 3)), ws), DimensionError);
  CHECK_THROWS_AS(similarity(v, p, t.constant(Tensor::Zero(8, 1))), DimensionError);
}

TEST_CASE("attend_paragraph_over_objects") {
  Tape t;
  std::mt19937_64 rng(2);
  const Tensor single = uniform(1, 3, rng);
  const Tensor one = attend_paragraph_over_objects(t.constant(uniform(1, 4, rng)),
                                                   t.constant(single))
                       .value();
  for (Index k = 0; k < 4; ++k)
    CHECK(Tensor(one.row(k)) == single);

  const Tensor two = uniform(2, 3, rng);
  const Tensor mean = attend_paragraph_over_objects(t.constant(Tensor::Zero(2, 5)),
                                                    t.constant(two))
                        .value();
  for (Index k = 0; k < 5; ++k)
    CHECK((mean.row(k) - 0.5 * (two.row(0) + two.row(1))).cwiseAbs().maxCoeff() < 1e-15);

  for (int trial = 0; trial < 30; ++trial) {
    const Index o = dim(rng), k = dim(rng), d = dim(rng);
    const Tensor v = uniform(o, d, rng);
    const Tensor vp =
      attend_paragraph_over_objects(t.constant(uniform(o, k, rng, -5, 5)), t.constant(v)).value();
    CHECK(vp.rows() == k);
    for (Index r = 0; r < k; ++r)
      for (Index c = 0; c < d; ++c) {
        CHECK(vp(r, c) >= v.col(c).minCoeff() - 1e-12);
        CHECK(vp(r, c) <= v.col(c).maxCoeff() + 1e-12);
      }
  }
  CHECK_THROWS_AS(attend_paragraph_over_objects(t.constant(Tensor::Zero(2, 2)),
                                                t.constant(Tensor::Zero(3, 2))),
                  DimensionError);
}

TEST_CASE("fuse_paragraph and fuse_visual") {
  Tape t;
  std::mt19937_64 rng(3);
  const Tensor p = uniform(3, 2, rng);
  CHECK(fuse_paragraph(t.constant(p), t.constant(Tensor::Zero(3, 2))).value() ==
        Tensor(concat_cols(t.constant(p), t.constant(Tensor::Zero(3, 2))).value()));
  const Tensor v = uniform(2, 4, rng);
  const Tensor vf = fuse_visual(t.constant(v), t.constant(Tensor::Ones(2, 4))).value();
  CHECK(Tensor(vf.leftCols(4)) == v);
  CHECK(Tensor(vf.rightCols(4)) == v);
  CHECK(fuse_paragraph(t.constant(from_rows({{1, 2}})), t.constant(from_rows({{3, 4}})))
          .value() == from_rows({{1, 2, 3, 8}}));
  CHECK_THROWS_AS(fuse_visual(t.constant(v), t.constant(Tensor::Zero(3, 4))), DimensionError);
}

TEST_CASE("question_attention") {
  Tape t;
  std::mt19937_64 rng(4);
  const Branch b = random_branch(t, 6, 3, 5, 4, 7, rng);
  const Var q = t.constant(uniform(3, 1, rng));

  const Tensor row = uniform(1, 6, rng);
  const Tensor same = row.replicate(4, 1);
  const Tensor uni = question_attention(t.constant(same), q, b.att).value();
  for (Index i = 0; i < 4; ++i)
    CHECK(uni(i, 0) == doctest::Approx(0.25).epsilon(1e-15));

  CHECK(question_attention(t.constant(row), q, b.att).value() == from_rows({{1}}));

  for (int trial = 0; trial < 20; ++trial) {
    const Index m = dim(rng, 1, 8);
    const Tensor rows = uniform(m, 6, rng, -3, 3);
    const Tensor a = question_attention(t.constant(rows), q, b.att).value();
    CHECK(a.rows() == m);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(std::abs(a.sum() - 1.0) < 1e-9);

    // permuting the rows permutes the weights and keeps the pooled vector
    std::vector<Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor prows = permute_rows(rows, perm);
    const Tensor pa = question_attention(t.constant(prows), q, b.att).value();
    for (Index i = 0; i < m; ++i)
      CHECK(std::abs(pa(i, 0) - a(perm[static_cast<std::size_t>(i)], 0)) < 1e-12);
    const Tensor pooled = rows.transpose() * a;
    const Tensor ppooled = prows.transpose() * pa;
    CHECK((pooled - ppooled).cwiseAbs().maxCoeff() < 1e-12);
  }

  // duplicated rows split their mass equally
  Tensor dup = uniform(3, 6, rng);
  dup.row(2) = dup.row(0);
  const Tensor da = question_attention(t.constant(dup), q, b.att).value();
  CHECK(da(0, 0) == da(2, 0));
}

TEST_CASE("pool_and_gate") {
  Tape t;
  std::mt19937_64 rng(5);
  const Branch b = random_branch(t, 6, 3, 5, 4, 7, rng);
  const Var q = t.constant(uniform(3, 1, rng));
  const Tensor rows = uniform(4, 6, rng);

  const Tensor logits = pool_and_gate(t.constant(rows), t.constant(column({0, 0, 1, 0})), q,
                                      b.gate)
                          .value();
  const Tensor direct = pool_and_gate(t.constant(Tensor(rows.row(2))), t.constant(column({1})),
                                      q, b.gate)
                          .value();
  CHECK(logits == direct);
  CHECK(logits.rows() == 7);

  GateVars zero_wp = b.gate;
  zero_wp.w_p = t.constant(Tensor::Zero(4, 6));
  CHECK(pool_and_gate(t.constant(rows), t.constant(Tensor::Constant(4, 1, 0.25)), q, zero_wp)
          .value() == b.gate.b_cls.value());

  for (Index m = 1; m < 6; ++m)
    CHECK(pool_and_gate(t.constant(uniform(m, 6, rng)),
                        t.constant(Tensor::Constant(m, 1, 1.0 / static_cast<double>(m))), q,
                        b.gate)
            .value()
            .rows() == 7);
  CHECK_THROWS_AS(pool_and_gate(t.constant(rows), t.constant(Tensor::Zero(3, 1)), q, b.gate),
                  DimensionError);
}

TEST_CASE("visual and paragraph branches share one pipeline") {
  Tape t;
  std::mt19937_64 rng(6);
  const Branch b = random_branch(t, 8, 3, 5, 4, 6, rng);
  const Var q = t.constant(uniform(3, 1, rng));
  const Tensor v = uniform(3, 4, rng), c = uniform(3, 4, rng);
  const Var fused = fuse_visual(t.constant(v), t.constant(c));
  const BranchOutput visual = run_branch(fused, q, b.att, b.gate);
  const BranchOutput paragraph = run_branch(fuse_paragraph(t.constant(v), t.constant(c)), q,
                                            b.att, b.gate);
  CHECK(visual.logits.value() == paragraph.logits.value());
  CHECK(visual.alpha.value() == paragraph.alpha.value());
}

TEST_CASE("end-to-end gradient through similarity, attention, gate and loss") {
  std::mt19937_64 rng(7);
  const Index d = 3, dq = 2, ha = 4, hg = 4, answers = 5;
  const Tensor v = uniform(2, d, rng);
  const Tensor ws = uniform(3 * d, 1, rng);
  const Tensor q = uniform(dq, 1, rng);
  std::vector<Tensor> weights = {uniform(ha, 2 * d, rng), uniform(ha, dq, rng),
                                 uniform(ha, 1, rng),     uniform(hg, 2 * d, rng),
                                 uniform(hg, dq, rng),    uniform(answers, hg, rng),
                                 uniform(answers, 1, rng)};
  auto loss = [&](Tape &t, const Var &p) {
    const Var vis = t.constant(v);
    const Var rows = fuse_paragraph(p, attend_paragraph_over_objects(
                                         similarity(vis, p, t.constant(ws)), vis));
    const AttentionVars att{t.constant(weights[0]), t.constant(weights[1]),
                            t.constant(weights[2])};
    const GateVars gate{t.constant(weights[3]), t.constant(weights[4]),
                        t.constant(weights[5]), t.constant(weights[6])};
    return cross_entropy(run_branch(rows, t.constant(q), att, gate).logits, 2);
  };
  CHECK(grad_check(loss, uniform(2, d, rng)) < 1e-4);
}
